#pragma once

#include "pcis/rng.hpp"
#include "pcis/types.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace pcis {

/// Finite MDP with a known kernel, used as ground truth. Transition rows are
/// distributions over states plus an explicit absorbing unsafe sink (column
/// state_count), so leaving the safe region carries its probability mass
/// explicitly and rows stay stochastic.
struct FiniteMdpModel {
    int state_count = 0;
    int action_count = 0;
    Mat kernel;                       // (state*action_count + action) x (state_count + 1)
    std::vector<std::uint8_t> safe_states;

    int sink() const { return state_count; }

    double prob(int x, int u, int x_next) const {
        return kernel(static_cast<Eigen::Index>(x) * action_count + u, x_next);
    }

    void validate() const {
        if (state_count < 1 || action_count < 1)
            throw std::invalid_argument("FiniteMdpModel: empty state or action set");
        if (kernel.rows() != static_cast<Eigen::Index>(state_count) * action_count ||
            kernel.cols() != state_count + 1)
            throw std::invalid_argument("FiniteMdpModel: kernel shape mismatch");
        if (static_cast<int>(safe_states.size()) != state_count)
            throw std::invalid_argument("FiniteMdpModel: safe_states size mismatch");
        for (Eigen::Index r = 0; r < kernel.rows(); ++r) {
            double sum = 0.0;
            for (Eigen::Index c = 0; c < kernel.cols(); ++c) {
                if (kernel(r, c) < -1e-15)
                    throw std::invalid_argument("FiniteMdpModel: negative probability");
                sum += kernel(r, c);
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw std::invalid_argument("FiniteMdpModel: kernel row does not sum to 1");
        }
    }
};

using StateSubset = std::vector<std::uint8_t>;

/// Exact backward recursion with the true kernel:
/// p_N = 1_Omega, p_j(x) = 1_Omega(x) * max_u E[p_{j+1}(x') | x,u].
/// Returns the stage-0 values; the sink contributes zero continuation.
inline Vec exact_dp(const FiniteMdpModel& model, const StateSubset& omega, int horizon) {
    if (static_cast<int>(omega.size()) != model.state_count)
        throw std::invalid_argument("exact_dp: omega size mismatch");
    for (int x = 0; x < model.state_count; ++x)
        if (omega[x] && !model.safe_states[x])
            throw std::invalid_argument("exact_dp: omega must be a subset of the safe states");
    Vec p(model.state_count);
    for (int x = 0; x < model.state_count; ++x) p[x] = omega[x] ? 1.0 : 0.0;
    for (int j = horizon - 1; j >= 0; --j) {
        Vec next(model.state_count);
        for (int x = 0; x < model.state_count; ++x) {
            if (!omega[x]) {
                next[x] = 0.0;
                continue;
            }
            double best = 0.0;
            for (int u = 0; u < model.action_count; ++u) {
                double e = 0.0;
                for (int y = 0; y < model.state_count; ++y) e += model.prob(x, u, y) * p[y];
                if (e > best) best = e;
            }
            next[x] = best;
        }
        p = next;
    }
    return p;
}

/// Exact safety operator: {x in Omega : p_0(x) >= 1 - epsilon}.
inline StateSubset exact_q_operator(const FiniteMdpModel& model, const StateSubset& omega,
                                    int horizon, double epsilon) {
    const Vec p0 = exact_dp(model, omega, horizon);
    StateSubset out(omega.size(), 0);
    for (int x = 0; x < model.state_count; ++x)
        out[x] = (omega[x] && p0[x] >= 1.0 - epsilon) ? 1 : 0;
    return out;
}

/// Maximal (N,epsilon)-PCIS: iterate the exact operator from the safe states
/// until stabilization, then re-check the fixed-point property.
inline StateSubset maximal_pcis(const FiniteMdpModel& model, int horizon, double epsilon) {
    StateSubset omega = model.safe_states;
    for (;;) {
        StateSubset next = exact_q_operator(model, omega, horizon, epsilon);
        if (next == omega) break;
        omega = next;
    }
    if (exact_q_operator(model, omega, horizon, epsilon) != omega)
        throw std::logic_error("maximal_pcis: result is not a fixed point");
    return omega;
}

/// One-step samples under the uniform-random behavior policy with i.i.d.
/// restarts from uniformly drawn safe states. States are embedded as 1-d
/// index vectors; a sink transition lands on index state_count, which lies
/// outside the finite grid's box.
inline TransitionDataset sample_transitions(const FiniteMdpModel& model, std::size_t count,
                                            std::uint64_t seed, DataTag tag = DataTag::Grow) {
    std::vector<int> safe_idx;
    for (int x = 0; x < model.state_count; ++x)
        if (model.safe_states[x]) safe_idx.push_back(x);
    if (safe_idx.empty() && count > 0)
        throw std::invalid_argument("sample_transitions: no safe states to restart from");
    Rng rng(seed);
    TransitionDataset data;
    data.rows.reserve(count);
    for (std::size_t t = 0; t < count; ++t) {
        const int x = safe_idx[uniform_int(rng, 0, static_cast<int>(safe_idx.size()) - 1)];
        const int u = uniform_int(rng, 0, model.action_count - 1);
        const double r = uniform01(rng);
        double acc = 0.0;
        int x_next = model.sink();
        for (int y = 0; y <= model.state_count; ++y) {
            acc += model.prob(x, u, y);
            if (r <= acc) {
                x_next = y;
                break;
            }
        }
        Transition tr;
        tr.state = Vec::Constant(1, static_cast<double>(x));
        tr.action = u;
        tr.next_state = Vec::Constant(1, static_cast<double>(x_next));
        tr.tag = tag;
        data.rows.push_back(std::move(tr));
    }
    return data;
}

struct RandomMdpOptions {
    int max_states = 6;
    int max_actions = 3;
    double dirichlet_concentration = 0.8;
    double near_deterministic_fraction = 0.4; // rows replaced by ~point masses
    double sink_weight = 0.35;                // relative Dirichlet weight on the sink column
};

/// Seeded random finite MDP generator for conservatism sweeps. Rows are
/// Dirichlet draws over states + sink; a configurable fraction is made
/// near-deterministic to cover both diffuse and peaked kernels.
inline FiniteMdpModel random_mdp(Rng& rng, const RandomMdpOptions& opt = {}) {
    FiniteMdpModel m;
    m.state_count = uniform_int(rng, 2, opt.max_states);
    m.action_count = uniform_int(rng, 1, opt.max_actions);
    m.safe_states.assign(m.state_count, 1);
    m.kernel.resize(static_cast<Eigen::Index>(m.state_count) * m.action_count,
                    m.state_count + 1);
    std::gamma_distribution<double> gamma_state(opt.dirichlet_concentration, 1.0);
    std::gamma_distribution<double> gamma_sink(
        opt.dirichlet_concentration * opt.sink_weight, 1.0);
    for (int x = 0; x < m.state_count; ++x) {
        for (int u = 0; u < m.action_count; ++u) {
            const Eigen::Index r = static_cast<Eigen::Index>(x) * m.action_count + u;
            if (uniform01(rng) < opt.near_deterministic_fraction) {
                const int target = uniform_int(rng, 0, m.state_count); // sink included
                const double mass = uniform(rng, 0.9, 1.0);
                for (int y = 0; y <= m.state_count; ++y)
                    m.kernel(r, y) = (1.0 - mass) / m.state_count;
                m.kernel(r, target) += mass - (1.0 - mass) / m.state_count;
                // renormalize exactly
            } else {
                for (int y = 0; y < m.state_count; ++y) m.kernel(r, y) = gamma_state(rng);
                m.kernel(r, m.state_count) = gamma_sink(rng);
            }
            const double sum = m.kernel.row(r).sum();
            m.kernel.row(r) /= sum;
        }
    }
    m.validate();
    return m;
}

} // namespace pcis
