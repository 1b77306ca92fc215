#pragma once

#include "pcis/features.hpp"
#include "pcis/lattice.hpp"
#include "pcis/ridge.hpp"
#include "pcis/types.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace pcis {

/// Stage-indexed safe action data over the lattice: per point the thresholded
/// action set {u : l_j >= 1-eps} as a bitmask, plus the argmax continuation
/// selector (lowest index on ties). Points outside the reference set carry an
/// empty set and continuation -1.
struct StageActionMap {
    std::vector<std::uint32_t> safe_sets;
    std::vector<std::int32_t> continuation;

    bool contains(std::int64_t point, int action) const {
        return (safe_sets[static_cast<std::size_t>(point)] >> action) & 1u;
    }
    std::vector<int> actions(std::int64_t point, int action_count) const {
        std::vector<int> out;
        for (int u = 0; u < action_count; ++u)
            if (contains(point, u)) out.push_back(u);
        return out;
    }
};

struct OperatorResult {
    LatticeMask q_set;                        // thresholded stage-0 set
    SafetyValueTable value_table;             // stages 0..N
    std::vector<StageActionMap> action_maps;  // stages 0..N-1
    std::vector<RidgeStage> stages;           // fitted stage regressions
};

struct CertificationOutcome {
    bool accepted = false;
    LatticeMask cert_set;
    std::vector<StageActionMap> cert_action_maps;
};

/// Implementation-level knobs. beta_scale mirrors the experiment's tuning
/// parameter on the confidence term; beta_fixed replaces the default closed
/// form entirely. Neither affects the discretization penalty.
struct OperatorOptions {
    double ridge_lambda = 1.0;
    double beta_scale = 1.0;
    std::optional<double> beta_fixed;
};

using BlockRanges = std::vector<std::pair<std::size_t, std::size_t>>;

/// Contiguous, disjoint, exhaustive stage blocks in arrival order with sizes
/// differing by at most one (earlier stages take the remainder).
inline BlockRanges split_stagewise(const TransitionDataset& dataset, int horizon) {
    if (horizon < 1) throw std::invalid_argument("split_stagewise: horizon must be >= 1");
    const std::size_t total = dataset.size();
    const std::size_t base = total / static_cast<std::size_t>(horizon);
    const std::size_t rem = total % static_cast<std::size_t>(horizon);
    BlockRanges blocks;
    blocks.reserve(static_cast<std::size_t>(horizon));
    std::size_t begin = 0;
    for (int j = 0; j < horizon; ++j) {
        const std::size_t len = base + (static_cast<std::size_t>(j) < rem ? 1 : 0);
        blocks.emplace_back(begin, begin + len);
        begin += len;
    }
    return blocks;
}

/// The lattice-based conservative backward recursion (the exact finite-state
/// variant is the same pipeline: one-hot maps have L_phi = 0, so the
/// discretization penalty vanishes).
///
/// For j = N-1..0: regress the lifted stage-(j+1) values on block j, choose
/// beta_j, then score every lattice point in omega against every action with
/// l_j = theta_hat^T phi - d*L_phi*delta_x - beta_j*sigma, saturated to [0,1]
/// after the max over actions. Returns the thresholded stage-0 set, all stage
/// values, the stage action sets with continuation selectors, and the fitted
/// regressions.
inline OperatorResult conservative_operator(const LatticeMask& omega,
                                            const TransitionDataset& data,
                                            const BlockRanges& blocks, const FeatureMap& map,
                                            const ConfidenceParams& params,
                                            const LatticeGrid& grid,
                                            const OperatorOptions& opt = {}) {
    params.validate();
    if (static_cast<int>(blocks.size()) != params.horizon)
        throw std::invalid_argument("conservative_operator: one data block per stage required");
    if (map.dimension() != params.dimension)
        throw std::invalid_argument("conservative_operator: feature/params dimension mismatch");
    if (omega.size() != grid.total)
        throw std::invalid_argument("conservative_operator: omega/grid size mismatch");

    const int n_actions = map.action_count();
    if (n_actions > 31)
        throw std::invalid_argument("conservative_operator: more than 31 actions unsupported");
    const int d = map.dimension();
    const int m = map.block_size();
    const int N = params.horizon;
    const double penalty = d * map.lipschitz_bound() * grid.delta_x;
    const double threshold = 1.0 - params.epsilon;

    OperatorResult res;
    res.q_set = LatticeMask(grid.total);
    res.value_table.stage_values.assign(static_cast<std::size_t>(N) + 1,
                                        Vec::Zero(grid.total));
    res.action_maps.assign(static_cast<std::size_t>(N),
                           StageActionMap{std::vector<std::uint32_t>(
                                              static_cast<std::size_t>(grid.total), 0u),
                                          std::vector<std::int32_t>(
                                              static_cast<std::size_t>(grid.total), -1)});
    res.stages.reserve(static_cast<std::size_t>(N));

    // terminal stage: indicator of the reference set
    for (std::int64_t k = 0; k < grid.total; ++k)
        res.value_table.stage_values[static_cast<std::size_t>(N)][k] = omega.get(k) ? 1.0 : 0.0;

    std::vector<std::int64_t> members;
    for (std::int64_t k = 0; k < grid.total; ++k)
        if (omega.get(k)) members.push_back(k);

    if (members.empty()) {
        for (int j = 0; j < N; ++j)
            res.stages.push_back(ridge_init(d, opt.ridge_lambda));
        return res;
    }

    // state bases of the reference lattice points, row per member
    Mat psi(static_cast<Eigen::Index>(members.size()), m);
    for (std::size_t i = 0; i < members.size(); ++i)
        psi.row(static_cast<Eigen::Index>(i)) = map.state_basis(grid.point(members[i])).transpose();

    std::vector<RidgeStage> fitted(static_cast<std::size_t>(N));
    for (int j = N - 1; j >= 0; --j) {
        const auto [b, e] = blocks[static_cast<std::size_t>(j)];
        RidgeStage stage = ridge_init(d, opt.ridge_lambda);
        for (std::size_t t = b; t < e; ++t) {
            const Transition& tr = data.rows[t];
            const double y = lift(res.value_table, j + 1, omega, grid, tr.next_state);
            stage.absorb(map.eval(tr.state, tr.action), y);
        }
        const double beta = opt.beta_fixed
                                ? *opt.beta_fixed
                                : opt.beta_scale * beta_default(params, j, stage.sample_count(),
                                                                opt.ridge_lambda);
        stage.set_beta(beta);

        Vec& values = res.value_table.stage_values[static_cast<std::size_t>(j)];
        StageActionMap& amap = res.action_maps[static_cast<std::size_t>(j)];
        for (int u = 0; u < n_actions; ++u) {
            const int off = map.block_offset(u);
            const Vec theta_u = stage.theta_hat().segment(off, m);
            const Mat vinv_u = stage.gram_inverse().block(off, off, m, m);
            const Vec scores = psi * theta_u;
            const Mat tmp = psi * vinv_u;
            const Vec s2 = tmp.cwiseProduct(psi).rowwise().sum();
            for (std::size_t i = 0; i < members.size(); ++i) {
                const auto ei = static_cast<Eigen::Index>(i);
                const double sig = std::sqrt(s2[ei] < 0.0 ? 0.0 : s2[ei]);
                const double ell = scores[ei] - penalty - beta * sig;
                const std::int64_t k = members[i];
                const double sat = clip01(ell);
                if (ell >= threshold)
                    amap.safe_sets[static_cast<std::size_t>(k)] |= (1u << u);
                if (u == 0 || sat > values[k]) {
                    values[k] = sat;
                    amap.continuation[static_cast<std::size_t>(k)] = u;
                }
            }
        }
        fitted[static_cast<std::size_t>(j)] = std::move(stage);
    }
    res.stages = std::move(fitted);

    const Vec& v0 = res.value_table.stage_values[0];
    for (std::int64_t k : members)
        if (v0[k] >= threshold) res.q_set.set(k, true);
    return res;
}

/// Finite-state variant: requires a one-hot tabular map so the
/// discretization penalty is exactly zero and the recursion runs on the
/// state set itself.
inline OperatorResult operator_exact_variant(const LatticeMask& omega,
                                             const TransitionDataset& data,
                                             const BlockRanges& blocks, const FeatureMap& map,
                                             const ConfidenceParams& params,
                                             const LatticeGrid& grid,
                                             const OperatorOptions& opt = {}) {
    if (map.kind() != FeatureKind::OneHotTabular)
        throw std::invalid_argument("operator_exact_variant: one-hot tabular map required");
    return conservative_operator(omega, data, blocks, map, params, grid, opt);
}

/// Stage-j safe action set at a continuous state; looks up the quantized
/// lattice point. Empty is a legal return.
inline std::vector<int> safe_actions(const OperatorResult& result, int stage, const Vec& state,
                                     const LatticeGrid& grid, int action_count) {
    if (stage < 0 || stage >= static_cast<int>(result.action_maps.size()))
        throw std::invalid_argument("safe_actions: stage out of range");
    const std::int64_t k = grid.quantize(grid.box.clamp(state));
    return result.action_maps[static_cast<std::size_t>(stage)].actions(k, action_count);
}

struct ConInvResult {
    LatticeMask fixed_point;
    OperatorResult final_result; // operator evaluated at the fixed point
    int iterations = 0;
};

/// Fixed-point search: iterate Omega <- Q_tilde(Omega) from the safe mask
/// until exact mask equality. Stage blocks are split once from the dataset
/// and reused across iterations. Terminates in at most |lattice|+1 steps
/// since iterates are nonincreasing.
inline ConInvResult con_inv(const TransitionDataset& dataset, const LatticeMask& safe_mask,
                            const FeatureMap& map, const ConfidenceParams& params,
                            const LatticeGrid& grid, const OperatorOptions& opt = {}) {
    const BlockRanges blocks = split_stagewise(dataset, params.horizon);
    ConInvResult out;
    LatticeMask omega = safe_mask;
    for (;;) {
        OperatorResult res = conservative_operator(omega, dataset, blocks, map, params, grid, opt);
        ++out.iterations;
        if (res.q_set == omega) {
            out.fixed_point = omega;
            out.final_result = std::move(res);
            return out;
        }
        omega = res.q_set;
    }
}

/// Hold-out certification: a single operator evaluation on the fixed
/// tentative reference set using only the certification data. Accepts iff
/// the tentative set is contained in the evaluated set; the returned action
/// maps are the ones deployed on acceptance.
inline CertificationOutcome certify_shield(const TransitionDataset& cert_dataset,
                                           const LatticeMask& omega_tent, const FeatureMap& map,
                                           const ConfidenceParams& params,
                                           const LatticeGrid& grid,
                                           const OperatorOptions& opt = {}) {
    const BlockRanges blocks = split_stagewise(cert_dataset, params.horizon);
    OperatorResult res = conservative_operator(omega_tent, cert_dataset, blocks, map, params,
                                               grid, opt);
    CertificationOutcome out;
    out.accepted = omega_tent.subset_of(res.q_set);
    out.cert_set = std::move(res.q_set);
    out.cert_action_maps = std::move(res.action_maps);
    return out;
}

// ---- finite-MDP embedding helpers ------------------------------------------

/// 1-d lattice whose points are exactly the state indices 0..S-1. A sink
/// transition (index S) lands outside the box, so the lift treats it as
/// leaving the safe set.
inline LatticeGrid finite_state_grid(int state_count) {
    if (state_count < 2)
        throw std::invalid_argument("finite_state_grid: need at least 2 states");
    Vec lo(1), hi(1);
    lo[0] = 0.0;
    hi[0] = static_cast<double>(state_count - 1);
    return build_grid(StateBox(lo, hi), {state_count});
}

inline LatticeMask mask_from_subset(const std::vector<std::uint8_t>& subset) {
    LatticeMask m(static_cast<std::int64_t>(subset.size()));
    for (std::size_t i = 0; i < subset.size(); ++i) m.set(static_cast<std::int64_t>(i), subset[i]);
    return m;
}

inline std::vector<std::uint8_t> subset_from_mask(const LatticeMask& mask) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(mask.size()), 0);
    for (std::int64_t i = 0; i < mask.size(); ++i) out[static_cast<std::size_t>(i)] = mask.get(i);
    return out;
}

} // namespace pcis
