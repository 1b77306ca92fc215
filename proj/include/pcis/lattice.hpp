#pragma once

#include "pcis/types.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace pcis {

/// Regular Cartesian grid over the safe box, endpoints included. Lattice
/// points enumerate row-major (last axis fastest), deterministically.
/// delta_x is the infinity-norm covering radius max_i spacing_i / 2, which is
/// what the discretization penalty d * L_phi * delta_x needs on anisotropic
/// grids.
struct LatticeGrid {
    StateBox box;
    std::vector<int> points_per_axis;
    Vec spacing;
    double delta_x = 0.0;
    std::vector<std::int64_t> strides;
    std::int64_t total = 0;

    int dim() const { return box.dim(); }

    std::int64_t flat_index(const std::vector<int>& axis_idx) const {
        std::int64_t flat = 0;
        for (int i = 0; i < dim(); ++i) flat += strides[i] * axis_idx[i];
        return flat;
    }

    std::vector<int> axis_indices(std::int64_t flat) const {
        std::vector<int> idx(dim());
        for (int i = 0; i < dim(); ++i) {
            idx[i] = static_cast<int>(flat / strides[i]);
            flat %= strides[i];
        }
        return idx;
    }

    Vec point(std::int64_t flat) const {
        const auto idx = axis_indices(flat);
        Vec x(dim());
        for (int i = 0; i < dim(); ++i) x[i] = box.lower[i] + spacing[i] * idx[i];
        return x;
    }

    /// Nearest-neighbor quantizer in the infinity norm; exact midpoints break
    /// toward the lower lattice index per axis. Idempotent on lattice points.
    std::int64_t quantize(const Vec& state) const {
        if (state.size() != dim()) throw std::invalid_argument("quantize: dimension mismatch");
        std::int64_t flat = 0;
        for (int i = 0; i < dim(); ++i) {
            const double t = (state[i] - box.lower[i]) / spacing[i];
            int k = static_cast<int>(std::ceil(t - 0.5));
            if (k < 0) k = 0;
            if (k >= points_per_axis[i]) k = points_per_axis[i] - 1;
            flat += strides[i] * k;
        }
        return flat;
    }
};

inline LatticeGrid build_grid(const StateBox& box, const std::vector<int>& points_per_axis) {
    if (static_cast<int>(points_per_axis.size()) != box.dim())
        throw std::invalid_argument("build_grid: one point count per axis required");
    for (int p : points_per_axis)
        if (p < 2) throw std::invalid_argument("build_grid: need at least 2 points per axis");
    LatticeGrid g;
    g.box = box;
    g.points_per_axis = points_per_axis;
    g.spacing.resize(box.dim());
    for (int i = 0; i < box.dim(); ++i)
        g.spacing[i] = (box.upper[i] - box.lower[i]) / (points_per_axis[i] - 1);
    g.delta_x = g.spacing.maxCoeff() / 2.0;
    g.strides.assign(points_per_axis.size(), 1);
    for (int i = box.dim() - 2; i >= 0; --i)
        g.strides[i] = g.strides[i + 1] * points_per_axis[i + 1];
    g.total = g.strides[0] * points_per_axis[0];
    return g;
}

/// Boolean membership over the lattice points of one grid.
struct LatticeMask {
    std::vector<std::uint8_t> bits;

    LatticeMask() = default;
    explicit LatticeMask(std::int64_t total, bool value = false)
        : bits(static_cast<std::size_t>(total), value ? 1 : 0) {}

    std::int64_t size() const { return static_cast<std::int64_t>(bits.size()); }
    bool get(std::int64_t i) const { return bits[static_cast<std::size_t>(i)] != 0; }
    void set(std::int64_t i, bool v) { bits[static_cast<std::size_t>(i)] = v ? 1 : 0; }

    std::int64_t count() const {
        std::int64_t c = 0;
        for (auto b : bits) c += (b != 0);
        return c;
    }
    bool any() const { return count() > 0; }

    bool subset_of(const LatticeMask& other) const {
        if (bits.size() != other.bits.size())
            throw std::invalid_argument("mask size mismatch");
        for (std::size_t i = 0; i < bits.size(); ++i)
            if (bits[i] && !other.bits[i]) return false;
        return true;
    }

    bool operator==(const LatticeMask& other) const { return bits == other.bits; }

    LatticeMask intersect(const LatticeMask& other) const {
        if (bits.size() != other.bits.size())
            throw std::invalid_argument("mask size mismatch");
        LatticeMask out(size());
        for (std::size_t i = 0; i < bits.size(); ++i)
            out.bits[i] = (bits[i] && other.bits[i]) ? 1 : 0;
        return out;
    }
};

/// Continuous-state membership in Omega: x must lie in the safe box and its
/// quantization must be in the mask. Used consistently by the lift, the
/// shield and violation accounting.
inline bool mask_contains(const LatticeGrid& grid, const LatticeMask& mask, const Vec& x) {
    if (!grid.box.contains(x)) return false;
    return mask.get(grid.quantize(x));
}

/// Lattice-indexed safety values p_tilde_j for every backward stage
/// j = 0..N; stage N is the terminal indicator.
struct SafetyValueTable {
    std::vector<Vec> stage_values; // index j in 0..N, each of grid.total length

    int stages() const { return static_cast<int>(stage_values.size()); }

    double value(int stage, std::int64_t point) const {
        return stage_values[static_cast<std::size_t>(stage)][point];
    }
};

/// Lift p_bar_j(x): the quantized table value inside Omega, 0 outside.
inline double lift(const SafetyValueTable& table, int stage, const LatticeMask& omega,
                   const LatticeGrid& grid, const Vec& state) {
    if (stage < 0 || stage >= table.stages())
        throw std::invalid_argument("lift: stage out of range");
    if (!grid.box.contains(state)) return 0.0;
    const std::int64_t idx = grid.quantize(state);
    if (!omega.get(idx)) return 0.0;
    return table.value(stage, idx);
}

} // namespace pcis
