#pragma once

#include "pcis/config.hpp"
#include "pcis/io.hpp"
#include "pcis/oracle.hpp"
#include "pcis/shield.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

namespace pcis::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitPropertyFailure = 2;

namespace fs = std::filesystem;

inline void write_manifest(const std::string& path, const ExperimentConfig& cfg,
                           const std::vector<std::string>& files) {
    Json m;
    m["config_hash"] = cfg.hash();
    m["master_seed"] = cfg.master_seed;
    m["seeds"] = cfg.seeds;
    m["files"] = files;
    auto os = open_out(path);
    os << m.dump(2) << "\n";
}

/// synthesize: ConInv on a transition dataset, emitting the tentative mask,
/// the stage value table, the stage action maps and a manifest.
inline int cmd_synthesize(const ExperimentConfig& cfg, const std::string& dataset_path,
                          const std::string& out_dir, std::ostream& log = std::cerr) {
    try {
        const LatticeGrid grid = cfg.make_grid();
        const FeatureMap map = cfg.make_feature_map();
        const ConfidenceParams params = cfg.make_params();
        const TransitionDataset data = read_dataset(dataset_path, grid.dim());
        if (data.empty()) log << "warning: dataset is empty; emitting the empty fixed point\n";

        const ConInvResult res =
            con_inv(data, cfg.make_safe_mask(grid), map, params, grid, cfg.make_operator_options());

        fs::create_directories(out_dir);
        const FileMeta meta{"", cfg.hash(), cfg.master_seed};
        write_mask(out_dir + "/mask.csv", grid, res.fixed_point, meta);
        write_value_table(out_dir + "/table.csv", grid, res.final_result.value_table, meta);
        write_action_maps(out_dir + "/actions.csv", grid, res.final_result.action_maps, meta);
        write_manifest(out_dir + "/manifest.json", cfg,
                       {"mask.csv", "table.csv", "actions.csv"});
        log << "synthesize: |fixed point| = " << res.fixed_point.count() << " of " << grid.total
            << " lattice points in " << res.iterations << " iterations\n";
        return kExitOk;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

/// certify: one hold-out operator evaluation of a tentative mask.
inline int cmd_certify(const ExperimentConfig& cfg, const std::string& mask_path,
                       const std::string& cert_dataset_path, const std::string& out_dir,
                       std::ostream& log = std::cerr) {
    try {
        const LatticeGrid grid = cfg.make_grid();
        const FeatureMap map = cfg.make_feature_map();
        const ConfidenceParams params = cfg.make_params();
        const LatticeMask tentative = read_mask(mask_path, grid.total);
        const TransitionDataset cert_data = read_dataset(cert_dataset_path, grid.dim());

        const CertificationOutcome out = certify_shield(cert_data, tentative, map, params, grid,
                                                        cfg.make_operator_options());

        fs::create_directories(out_dir);
        const FileMeta meta{"", cfg.hash(), cfg.master_seed};
        {
            auto os = open_out(out_dir + "/verdict.csv");
            write_meta(os, "pcis.verdict.v1", meta);
            os << "accepted\n" << (out.accepted ? 1 : 0) << "\n";
        }
        write_mask(out_dir + "/cert_mask.csv", grid, out.cert_set, meta);
        write_action_maps(out_dir + "/cert_actions.csv", grid, out.cert_action_maps, meta);
        write_manifest(out_dir + "/manifest.json", cfg,
                       {"verdict.csv", "cert_mask.csv", "cert_actions.csv"});
        log << "certify: " << (out.accepted ? "accepted" : "rejected") << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

struct SeedSummary {
    std::uint64_t seed = 0;
    double total_return = 0.0;
    long unsafe_steps = 0;
    bool fully_safe = true;
    long goals = 0;
    std::int64_t final_omega = 0;
    int accepted_updates = 0;
};

/// One full training run for a single seed; exposed so tests and the
/// acceptance suite can drive exactly what the CLI runs.
inline RunRecord train_one_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    const LatticeGrid grid = cfg.make_grid();
    const FeatureMap map = cfg.make_feature_map();
    const ConfidenceParams params = cfg.make_params();
    RngStreams streams(cfg.master_seed * 0x9e3779b97f4a7c15ULL + seed);
    if (cfg.env_type == "mountain_car") {
        MountainCarEnv env;
        LinearSarsaLearner learner(
            FeatureMap::fourier(cfg.make_box(), env.action_count(), cfg.sarsa_max_order, false),
            cfg.learner_alpha, cfg.learner_gamma, cfg.learner_lambda, cfg.make_exploration());
        return run_shielded_training(env, learner, cfg.make_shield_seed(grid), map, params, grid,
                                     cfg.make_safe_mask(grid), cfg.make_operator_options(),
                                     cfg.make_run_config(), streams);
    }
    FiniteEnv env(cfg.make_finite_model());
    TabularQLearner learner(cfg.finite_states, cfg.finite_actions, cfg.learner_alpha,
                            cfg.learner_gamma, cfg.make_exploration());
    return run_shielded_training(env, learner, cfg.make_shield_seed(grid), map, params, grid,
                                 cfg.make_safe_mask(grid), cfg.make_operator_options(),
                                 cfg.make_run_config(), streams);
}

/// train: one record per seed plus an aggregate summary. Seeds fan out over a
/// bounded worker pool; outputs are written in seed order.
inline int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir,
                     std::ostream& log = std::cerr) {
    try {
        const LatticeGrid grid = cfg.make_grid();
        fs::create_directories(out_dir);

        std::vector<RunRecord> records(cfg.seeds.size());
        const unsigned pool = std::max(1u, std::min<unsigned>(
                                               std::thread::hardware_concurrency(),
                                               static_cast<unsigned>(cfg.seeds.size())));
        std::vector<std::thread> workers;
        std::atomic<std::size_t> cursor{0};
        for (unsigned w = 0; w < pool; ++w)
            workers.emplace_back([&] {
                for (;;) {
                    const std::size_t i = cursor.fetch_add(1);
                    if (i >= cfg.seeds.size()) return;
                    records[i] = train_one_seed(cfg, cfg.seeds[i]);
                }
            });
        for (auto& t : workers) t.join();

        std::vector<std::string> files;
        std::vector<SeedSummary> summaries;
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
            const std::uint64_t seed = cfg.seeds[i];
            const RunRecord& rec = records[i];
            const FileMeta meta{"", cfg.hash(), seed};
            const std::string run_name = "run_seed" + std::to_string(seed) + ".csv";
            write_run_record(out_dir + "/" + run_name, rec, meta);
            files.push_back(run_name);
            const std::string grow_name = "grow_seed" + std::to_string(seed) + ".csv";
            write_dataset(out_dir + "/" + grow_name, rec.grow_data, grid.dim(), meta);
            files.push_back(grow_name);
            if (cfg.log_trajectory) {
                const std::string traj_name = "trajectory_seed" + std::to_string(seed) + ".csv";
                write_trajectory(out_dir + "/" + traj_name, rec, meta);
                files.push_back(traj_name);
            }
            for (const auto& [update, snapshot] : rec.shield_snapshots) {
                const std::string snap_name = "shield_seed" + std::to_string(seed) + "_update" +
                                              std::to_string(update) + ".csv";
                write_mask(out_dir + "/" + snap_name, grid, snapshot, meta);
                files.push_back(snap_name);
            }
            SeedSummary s;
            s.seed = seed;
            s.total_return = rec.intervals.empty() ? 0.0 : rec.intervals.back().cumulative_return;
            s.unsafe_steps = rec.total_unsafe_steps;
            s.fully_safe = rec.fully_safe;
            s.goals = rec.total_goals;
            s.final_omega = rec.final_shield.omega_hat.count();
            s.accepted_updates = rec.final_shield.update_index;
            summaries.push_back(s);
        }

        {
            auto os = open_out(out_dir + "/summary.csv");
            write_meta(os, "pcis.summary.v1", FileMeta{"", cfg.hash(), cfg.master_seed});
            os << "seed,total_return,unsafe_steps,fully_safe,goals,final_omega,accepted_updates\n";
            double mean_return = 0.0;
            long total_unsafe = 0;
            int safe_runs = 0, goal_runs = 0;
            for (const SeedSummary& s : summaries) {
                os << s.seed << "," << fmt_double(s.total_return) << "," << s.unsafe_steps << ","
                   << (s.fully_safe ? 1 : 0) << "," << s.goals << "," << s.final_omega << ","
                   << s.accepted_updates << "\n";
                mean_return += s.total_return;
                total_unsafe += s.unsafe_steps;
                safe_runs += s.fully_safe ? 1 : 0;
                goal_runs += s.goals > 0 ? 1 : 0;
            }
            const double n = static_cast<double>(summaries.size());
            os << "# aggregate mean_return=" << fmt_double(mean_return / n)
               << " total_unsafe=" << total_unsafe
               << " fully_safe_rate=" << fmt_double(safe_runs / n)
               << " goal_rate=" << fmt_double(goal_runs / n) << "\n";
        }
        files.push_back("summary.csv");

        // per-interval return curve: mean and standard deviation across seeds
        {
            std::size_t max_intervals = 0;
            for (const RunRecord& r : records) max_intervals = std::max(max_intervals, r.intervals.size());
            auto os = open_out(out_dir + "/intervals_aggregate.csv");
            write_meta(os, "pcis.curve.v1", FileMeta{"", cfg.hash(), cfg.master_seed});
            os << "interval,seeds,mean_return,sd_return\n";
            for (std::size_t i = 0; i < max_intervals; ++i) {
                double sum = 0.0, sum_sq = 0.0;
                int n = 0;
                for (const RunRecord& r : records)
                    if (i < r.intervals.size()) {
                        sum += r.intervals[i].interval_return;
                        sum_sq += r.intervals[i].interval_return * r.intervals[i].interval_return;
                        ++n;
                    }
                const double mean = sum / n;
                const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
                os << i << "," << n << "," << fmt_double(mean) << ","
                   << fmt_double(std::sqrt(var)) << "\n";
            }
        }
        files.push_back("intervals_aggregate.csv");
        write_manifest(out_dir + "/manifest.json", cfg, files);
        log << "train: " << cfg.seeds.size() << " seed(s) complete\n";
        return kExitOk;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

struct VerifyReport {
    int trials = 0;
    int conservative_hits = 0;
    bool values_in_range = true;
    bool contraction = true;
    bool nonempty_link = true;
    bool termination = true;
    double coverage() const {
        return trials == 0 ? 0.0 : static_cast<double>(conservative_hits) / trials;
    }
    double bound(double eta) const {
        return trials == 0 ? 1.0 : eta - 3.0 * std::sqrt(eta * (1.0 - eta) / trials);
    }
};

/// Monte Carlo conservatism suite on randomized finite linear MDPs with
/// one-hot features: empirical frequency of Q_tilde(Omega) being a subset of
/// the oracle's exact operator output must clear eta minus binomial slack,
/// alongside the structural recursion invariants.
inline VerifyReport run_conservatism_suite(int trials, double eta, std::uint64_t seed) {
    VerifyReport rep;
    rep.trials = trials;
    Rng rng(seed);
    for (int trial = 0; trial < trials; ++trial) {
        const FiniteMdpModel model = random_mdp(rng);
        const int n_states = model.state_count;
        const int horizon = uniform_int(rng, 1, 3);
        const double epsilon = uniform(rng, 0.05, 0.4);
        const std::size_t samples = static_cast<std::size_t>(uniform_int(rng, 40, 240));

        const LatticeGrid grid = finite_state_grid(n_states);
        const FeatureMap map = FeatureMap::one_hot(n_states, model.action_count);
        const ConfidenceParams params =
            ConfidenceParams::uniform(map.dimension(), horizon, epsilon, eta);
        const TransitionDataset data = sample_transitions(model, samples, splitmix64(seed));

        const LatticeMask omega = mask_from_subset(model.safe_states);
        const BlockRanges blocks = split_stagewise(data, horizon);
        const OperatorResult res =
            operator_exact_variant(omega, data, blocks, map, params, grid);

        const StateSubset exact =
            exact_q_operator(model, model.safe_states, horizon, epsilon);
        if (res.q_set.subset_of(mask_from_subset(exact))) ++rep.conservative_hits;

        if (!res.q_set.subset_of(omega)) rep.contraction = false;
        for (const Vec& stage : res.value_table.stage_values)
            for (Eigen::Index k = 0; k < stage.size(); ++k)
                if (stage[k] < 0.0 || stage[k] > 1.0) rep.values_in_range = false;
        const double threshold = 1.0 - epsilon;
        for (int j = 0; j < horizon; ++j)
            for (std::int64_t k = 0; k < grid.total; ++k)
                if (res.value_table.value(j, k) >= threshold && omega.get(k) &&
                    res.action_maps[static_cast<std::size_t>(j)]
                            .safe_sets[static_cast<std::size_t>(k)] == 0u)
                    rep.nonempty_link = false;

        const ConInvResult ci = con_inv(data, omega, map, params, grid);
        if (ci.iterations > grid.total + 1) rep.termination = false;
    }
    return rep;
}

inline int cmd_verify(const ExperimentConfig& cfg, const std::string& out_path,
                      std::ostream& log = std::cerr) {
    try {
        const VerifyReport rep = run_conservatism_suite(cfg.verify_trials, cfg.eta, cfg.verify_seed);
        auto os = open_out(out_path);
        write_meta(os, "pcis.verify.v1", FileMeta{"", cfg.hash(), cfg.verify_seed});
        os << "invariant,value,bound,pass\n";
        const bool cov_pass = rep.trials > 0 && rep.coverage() >= rep.bound(cfg.eta);
        os << "conservatism_coverage," << fmt_double(rep.coverage()) << ","
           << fmt_double(rep.bound(cfg.eta)) << "," << (cov_pass ? 1 : 0) << "\n";
        os << "values_in_unit_interval,,," << (rep.values_in_range ? 1 : 0) << "\n";
        os << "reference_contraction,,," << (rep.contraction ? 1 : 0) << "\n";
        os << "nonempty_action_link,,," << (rep.nonempty_link ? 1 : 0) << "\n";
        os << "coninv_termination,,," << (rep.termination ? 1 : 0) << "\n";
        const bool all_pass = cov_pass && rep.values_in_range && rep.contraction &&
                              rep.nonempty_link && rep.termination;
        log << "verify: coverage " << rep.coverage() << " (bound " << rep.bound(cfg.eta) << "), "
            << (all_pass ? "pass" : "FAIL") << "\n";
        return all_pass ? kExitOk : kExitPropertyFailure;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

/// export: merge a synthesized artifact directory into one tidy plot CSV
/// (coordinates, membership bit, stage-0 value, safe action count).
inline int cmd_export(const ExperimentConfig& cfg, const std::string& artifact_dir,
                      const std::string& out_path, std::ostream& log = std::cerr) {
    try {
        const LatticeGrid grid = cfg.make_grid();
        const LatticeMask mask = read_mask(artifact_dir + "/mask.csv", grid.total);
        const SafetyValueTable table = read_value_table(artifact_dir + "/table.csv", grid.total);
        const std::vector<StageActionMap> maps =
            read_action_maps(artifact_dir + "/actions.csv", grid.total);
        auto os = open_out(out_path);
        write_meta(os, "pcis.plot.v1", FileMeta{"", cfg.hash(), cfg.master_seed});
        os << "index";
        for (int i = 0; i < grid.dim(); ++i) os << ",x" << i;
        os << ",bit,value0,safe_action_count,continuation\n";
        for (std::int64_t k = 0; k < grid.total; ++k) {
            const Vec p = grid.point(k);
            int count = 0;
            int cont = -1;
            if (!maps.empty()) {
                const std::uint32_t bits = maps[0].safe_sets[static_cast<std::size_t>(k)];
                for (int u = 0; u < 31; ++u) count += (bits >> u) & 1u;
                cont = maps[0].continuation[static_cast<std::size_t>(k)];
            }
            os << k;
            for (int i = 0; i < grid.dim(); ++i) os << "," << fmt_double(p[i]);
            os << "," << (mask.get(k) ? 1 : 0) << ","
               << fmt_double(table.stages() > 0 ? table.value(0, k) : 0.0) << "," << count << ","
               << cont << "\n";
        }
        log << "export: wrote " << out_path << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

} // namespace pcis::cli
