#pragma once

#include "pcis/env.hpp"
#include "pcis/lattice.hpp"
#include "pcis/learners.hpp"
#include "pcis/operator.hpp"
#include "pcis/rng.hpp"
#include "pcis/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace pcis {

/// The currently accepted shield: reference mask, stage-indexed safe action
/// maps with continuation selectors, and the receding-horizon stage pointer.
struct ShieldState {
    LatticeMask omega_hat;
    std::vector<StageActionMap> action_maps;
    int horizon = 1;
    int stage_pointer = 0;
    int update_index = 0;
    long contract_anomalies = 0;

    void reset_stage() { stage_pointer = 0; }
};

/// Filter one proposal. Inside the stage's safe set the proposal passes;
/// otherwise the safe action with the best value estimate executes (ties to
/// the lowest index). An empty safe set at a point the caller believes is in
/// Omega_hat falls back to the stored continuation selector and bumps the
/// anomaly counter; this can only arise from quantization mismatch at cell
/// boundaries.
inline std::pair<int, bool> shield_filter(ShieldState& shield, const LatticeGrid& grid,
                                          const Vec& state, int proposal,
                                          const Vec& value_estimates) {
    const StageActionMap& amap =
        shield.action_maps[static_cast<std::size_t>(shield.stage_pointer)];
    const std::int64_t k = grid.quantize(grid.box.clamp(state));
    const std::uint32_t safe = amap.safe_sets[static_cast<std::size_t>(k)];
    if ((safe >> proposal) & 1u) return {proposal, false};
    if (safe == 0u) {
        ++shield.contract_anomalies;
        const std::int32_t cont = amap.continuation[static_cast<std::size_t>(k)];
        return {cont >= 0 ? static_cast<int>(cont) : proposal, true};
    }
    int best = -1;
    for (int u = 0; u < value_estimates.size(); ++u) {
        if (!((safe >> u) & 1u)) continue;
        if (best < 0 || value_estimates[u] > value_estimates[best]) best = u;
    }
    return {best, true};
}

/// Receding-horizon stage advance after each executed step.
inline void advance_stage(ShieldState& shield) {
    shield.stage_pointer = (shield.stage_pointer + 1) % shield.horizon;
}

/// Fixed certification protocol: uniform over the tentative stage-0 safe
/// actions at the quantized state when nonempty, uniform over all actions
/// otherwise.
class CertificationPolicy {
public:
    CertificationPolicy(const LatticeGrid& grid, StageActionMap stage0, int action_count)
        : grid_(&grid), stage0_(std::move(stage0)), actions_(action_count) {}

    int act(const Vec& state, Rng& rng) const {
        const std::int64_t k = grid_->quantize(grid_->box.clamp(state));
        const auto safe = stage0_.actions(k, actions_);
        if (safe.empty()) return uniform_int(rng, 0, actions_ - 1);
        return safe[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<int>(safe.size()) - 1))];
    }

private:
    const LatticeGrid* grid_;
    StageActionMap stage0_;
    int actions_;
};

/// Fresh-reset certification rollouts on an independent stream. Episodes end
/// on goal or on leaving the tentative set; every executed transition is
/// recorded and tagged so any routing into learner updates or grow datasets
/// trips an assertion.
template <typename Env>
TransitionDataset collect_certification_data(Env& env, const CertificationPolicy& policy,
                                             long t_cert, Rng& rng, const LatticeGrid& grid,
                                             const LatticeMask& omega_tent) {
    TransitionDataset data;
    if (t_cert <= 0) return data;
    data.rows.reserve(static_cast<std::size_t>(t_cert));
    Vec s = env.reset(rng).observation;
    for (long t = 0; t < t_cert; ++t) {
        const int u = policy.act(s, rng);
        const EnvState next = env.step(u, rng);
        Transition tr;
        tr.state = s;
        tr.action = u;
        tr.next_state = next.observation;
        tr.tag = DataTag::Certification;
        data.rows.push_back(std::move(tr));
        if (next.terminal || !mask_contains(grid, omega_tent, next.observation))
            s = env.reset(rng).observation;
        else
            s = next.observation;
    }
    return data;
}

struct ShieldRunConfig {
    long t_grow = 300;        // executed steps per grow interval
    long t_cert = 300;        // certification transitions per update
    long budget_steps = 4000; // total executed grow steps
    bool shield_enabled = true;
    bool monotone_guard = true;
    bool log_trajectory = false;
};

struct TrajectoryRow {
    long step;
    Vec state;
    int action_proposed;
    int action_executed;
    double reward;
    bool in_omega;
    bool unsafe_exit;
};

struct IntervalRecord {
    int interval = 0;
    double interval_return = 0.0;
    double cumulative_return = 0.0;
    long unsafe_steps = 0;
    long goal_events = 0;
    std::int64_t tentative_size = 0;
    std::int64_t omega_size = 0;
    bool cert_accepted = false;
};

struct RunRecord {
    std::vector<IntervalRecord> intervals;
    long executed_steps = 0;
    long total_unsafe_steps = 0;
    long total_goals = 0;
    bool fully_safe = true;
    long contract_anomalies = 0;
    std::vector<std::pair<int, LatticeMask>> shield_snapshots;
    std::vector<TrajectoryRow> trajectory;
    ShieldState final_shield;
    TransitionDataset grow_data; // cumulative, for artifact export
};

/// The grow/certify training loop. Alternates T_grow executed (shielded)
/// steps that feed the cumulative grow dataset and the learner, a ConInv
/// fixed-point search on the grow data, fresh certification collection on an
/// independent environment instance and stream, and the certification-gated
/// shield update with an optional monotone guard. With the shield disabled
/// the proposals execute unfiltered and no shield updates happen; the record
/// still tracks unsafe steps.
template <typename Env, typename Learner>
RunRecord run_shielded_training(const Env& env_prototype, Learner& learner,
                                const ShieldState& shield_seed, const FeatureMap& map,
                                const ConfidenceParams& params, const LatticeGrid& grid,
                                const LatticeMask& safe_mask, const OperatorOptions& op_opt,
                                const ShieldRunConfig& cfg, const RngStreams& streams) {
    RunRecord rec;
    if (cfg.budget_steps <= 0) return rec;

    Env env = env_prototype;
    Env cert_env = env_prototype;
    Rng env_rng = streams.stream("env");
    Rng learner_rng = streams.stream("learner");
    Rng cert_env_rng = streams.stream("cert_env");

    ShieldState shield = shield_seed;
    shield.reset_stage();

    long executed = 0;
    double cumulative_return = 0.0;
    Vec s;

    auto filtered_action = [&](const Vec& state, long t) -> std::pair<int, int> {
        const int proposal = learner.propose(state, learner_rng, static_cast<std::size_t>(t));
        if (!cfg.shield_enabled) return {proposal, proposal};
        const auto [executed_u, intervened] =
            shield_filter(shield, grid, state, proposal, learner.q_values(state));
        (void)intervened;
        return {proposal, executed_u};
    };

    // the filter contract applies only inside Omega_hat, so rollouts restart
    // from resets that land there (bounded retries in case the seed misses
    // the reset support)
    auto start_rollout = [&]() {
        s = env.reset(env_rng).observation;
        if (cfg.shield_enabled && shield.omega_hat.any())
            for (int attempt = 0; attempt < 1000 && !mask_contains(grid, shield.omega_hat, s);
                 ++attempt)
                s = env.reset(env_rng).observation;
        learner.begin_episode();
        shield.reset_stage();
    };
    start_rollout();

    auto [prop0, exec0] = filtered_action(s, executed);
    int u_prop = prop0;
    int u_exec = exec0;

    int interval_index = 0;
    while (executed < cfg.budget_steps) {
        IntervalRecord interval;
        interval.interval = interval_index;
        const long interval_budget = std::min(cfg.t_grow, cfg.budget_steps - executed);

        for (long t = 0; t < interval_budget; ++t) {
            const EnvState next = env.step(u_exec, env_rng);
            ++executed;
            advance_stage(shield);
            interval.interval_return += next.reward;
            if (next.unsafe_exit) {
                ++interval.unsafe_steps;
                rec.fully_safe = false;
            }
            if (next.terminal) ++interval.goal_events;

            const bool in_omega_next =
                !cfg.shield_enabled || mask_contains(grid, shield.omega_hat, next.observation);
            if (cfg.log_trajectory)
                rec.trajectory.push_back({executed, next.observation, u_prop, u_exec, next.reward,
                                          in_omega_next, next.unsafe_exit});

            Transition tr;
            tr.state = s;
            tr.action = u_exec;
            tr.next_state = next.observation;
            tr.tag = DataTag::Grow;
            rec.grow_data.append_grow(std::move(tr));

            const bool rollout_ends = next.terminal || next.unsafe_exit || !in_omega_next;
            if (rollout_ends) {
                learner.update(s, u_exec, next.reward, next.observation, 0, true, DataTag::Grow);
                start_rollout();
                auto [p, e] = filtered_action(s, executed);
                u_prop = p;
                u_exec = e;
            } else {
                auto [p, e] = filtered_action(next.observation, executed);
                learner.update(s, u_exec, next.reward, next.observation, e, false, DataTag::Grow);
                s = next.observation;
                u_prop = p;
                u_exec = e;
            }
        }

        if (cfg.shield_enabled) {
            const ConInvResult grown = con_inv(rec.grow_data, safe_mask, map, params, grid, op_opt);
            CertificationPolicy cert_policy(grid, grown.final_result.action_maps.front(),
                                            env.action_count());
            const TransitionDataset cert_data = collect_certification_data(
                cert_env, cert_policy, cfg.t_cert, cert_env_rng, grid, grown.fixed_point);
            const CertificationOutcome cert =
                certify_shield(cert_data, grown.fixed_point, map, params, grid, op_opt);
            interval.tentative_size = grown.fixed_point.count();
            interval.cert_accepted = cert.accepted;
            const bool monotone_ok =
                !cfg.monotone_guard || shield.omega_hat.subset_of(grown.fixed_point);
            if (cert.accepted && monotone_ok) {
                shield.omega_hat = grown.fixed_point;
                shield.action_maps = cert.cert_action_maps;
                shield.horizon = params.horizon;
                ++shield.update_index;
                shield.reset_stage();
                rec.shield_snapshots.emplace_back(shield.update_index, shield.omega_hat);
                // an accepted non-monotone update can strand the current state
                if (!mask_contains(grid, shield.omega_hat, s)) start_rollout();
                // re-filter the pending action against the new shield
                auto [p, e] = filtered_action(s, executed);
                u_prop = p;
                u_exec = e;
            }
        }

        interval.omega_size = shield.omega_hat.count();
        cumulative_return += interval.interval_return;
        interval.cumulative_return = cumulative_return;
        rec.total_unsafe_steps += interval.unsafe_steps;
        rec.total_goals += interval.goal_events;
        rec.intervals.push_back(interval);
        ++interval_index;
    }

    rec.executed_steps = executed;
    rec.contract_anomalies = shield.contract_anomalies;
    rec.final_shield = std::move(shield);
    return rec;
}

} // namespace pcis
