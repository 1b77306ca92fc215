#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcis {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Clip to [0,1] (the saturation used by every backward recursion).
inline double clip01(double v) {
    if (v < 0.0) return 0.0;
    if (v > 1.0) return 1.0;
    return v;
}

/// Axis-aligned box in state space, lower < upper componentwise.
struct StateBox {
    Vec lower;
    Vec upper;

    StateBox() = default;
    StateBox(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() != upper.size() || lower.size() == 0)
            throw std::invalid_argument("StateBox: dimension mismatch");
        for (Eigen::Index i = 0; i < lower.size(); ++i)
            if (!(lower[i] < upper[i]))
                throw std::invalid_argument("StateBox: lower must be < upper on every axis");
    }

    int dim() const { return static_cast<int>(lower.size()); }

    bool contains(const Vec& x) const {
        if (x.size() != lower.size()) return false;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (x[i] < lower[i] || x[i] > upper[i]) return false;
        return true;
    }

    /// Componentwise clamp onto the box.
    Vec clamp(const Vec& x) const {
        Vec out = x;
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            if (out[i] < lower[i]) out[i] = lower[i];
            if (out[i] > upper[i]) out[i] = upper[i];
        }
        return out;
    }
};

/// Provenance tag for transition data. Certification data must never reach
/// learner updates or the grow dataset; the sinks assert on the tag.
enum class DataTag : std::uint8_t { Grow = 0, Certification = 1 };

struct Transition {
    Vec state;
    int action = 0;
    Vec next_state;
    DataTag tag = DataTag::Grow;
};

/// Ordered transition triples in arrival order.
struct TransitionDataset {
    std::vector<Transition> rows;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }

    void append(Transition t) { rows.push_back(std::move(t)); }

    /// Append as grow data; trips on certification-tagged rows.
    void append_grow(Transition t) {
        if (t.tag == DataTag::Certification)
            throw std::logic_error("certification transition routed into a grow dataset");
        rows.push_back(std::move(t));
    }
};

/// FNV-1a, used for config hashes and named RNG streams.
inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed = 1469598103934665603ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace pcis
