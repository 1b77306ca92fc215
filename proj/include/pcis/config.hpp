#pragma once

#include "pcis/env.hpp"
#include "pcis/features.hpp"
#include "pcis/lattice.hpp"
#include "pcis/learners.hpp"
#include "pcis/operator.hpp"
#include "pcis/shield.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcis {

using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void reject_unknown_keys(const Json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}
} // namespace detail

/// Parsed experiment configuration. The file format is a single JSON object;
/// every section is validated up front and unknown keys are rejected so typos
/// cannot silently change a run.
struct ExperimentConfig {
    // environment
    std::string env_type = "mountain_car"; // mountain_car | finite_random
    int finite_states = 4;
    int finite_actions = 2;
    std::uint64_t finite_model_seed = 7;
    double finite_concentration = 0.8;
    double finite_near_det_fraction = 0.4;
    double finite_sink_weight = 0.35;

    // feature map
    std::string feature_kind = "fourier"; // fourier | one_hot
    int fourier_max_order = 5;
    bool feature_normalize = true;

    // lattice grid
    std::vector<int> points_per_axis = {200, 30};

    // confidence / operator
    double epsilon = 0.3;
    double eta = 0.9;
    int horizon = 1;
    double ridge_lambda = 1.0;
    double sub_gaussian_r = 0.5;
    std::optional<double> theta_norm_bound; // default sqrt(d)
    std::optional<std::vector<double>> per_stage_delta;
    double beta_scale = 1.0;
    std::optional<double> beta_fixed;

    // learner
    std::string learner_type = "sarsa"; // sarsa | tabular_q
    double learner_alpha = 1e-3;
    double learner_gamma = 0.99;
    double learner_lambda = 0.9;
    int sarsa_max_order = 5;
    std::string exploration_kind = "linear"; // linear | exponential
    double eps_max = 0.5;
    double eps_min = 0.01;
    double eps_tau_or_span = 4000.0;

    // schedule
    long t_grow = 300;
    long t_cert = 300;
    long budget_steps = 4000;

    // flags
    bool shield_enabled = true;
    bool monotone_guard = true;
    bool log_trajectory = false;

    // shield seed
    std::string seed_type = "stop_box"; // stop_box | full_safe
    std::vector<double> seed_box_lower = {-0.8, -0.02};
    std::vector<double> seed_box_upper = {-0.25, 0.02};
    double brake_tolerance = 1e-3;

    // seeds
    std::uint64_t master_seed = 1;
    std::vector<std::uint64_t> seeds = {1};

    // verify command
    int verify_trials = 300;
    std::uint64_t verify_seed = 2024;

    Json raw = Json::object();

    std::uint64_t hash() const { return fnv1a64(raw.dump()); }

    // ---- parsing -------------------------------------------------------------

    static ExperimentConfig from_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path);
        Json j;
        try {
            is >> j;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        return from_json(j);
    }

    static ExperimentConfig from_json(const Json& j) {
        if (!j.is_object()) throw ConfigError("config root must be an object");
        detail::reject_unknown_keys(j,
                                    {"environment", "feature_map", "grid", "confidence",
                                     "learner", "schedule", "flags", "shield_seed", "master_seed",
                                     "seeds", "verify"},
                                    "config root");
        ExperimentConfig c;
        c.raw = j;

        if (j.contains("environment")) {
            const Json& e = j.at("environment");
            detail::reject_unknown_keys(e,
                                        {"type", "states", "actions", "model_seed",
                                         "concentration", "near_deterministic_fraction",
                                         "sink_weight"},
                                        "environment");
            c.env_type = e.value("type", c.env_type);
            c.finite_states = e.value("states", c.finite_states);
            c.finite_actions = e.value("actions", c.finite_actions);
            c.finite_model_seed = e.value("model_seed", c.finite_model_seed);
            c.finite_concentration = e.value("concentration", c.finite_concentration);
            c.finite_near_det_fraction =
                e.value("near_deterministic_fraction", c.finite_near_det_fraction);
            c.finite_sink_weight = e.value("sink_weight", c.finite_sink_weight);
        }
        if (j.contains("feature_map")) {
            const Json& f = j.at("feature_map");
            detail::reject_unknown_keys(f, {"kind", "max_order", "normalize"}, "feature_map");
            c.feature_kind = f.value("kind", c.feature_kind);
            c.fourier_max_order = f.value("max_order", c.fourier_max_order);
            c.feature_normalize = f.value("normalize", c.feature_normalize);
        }
        if (j.contains("grid")) {
            const Json& g = j.at("grid");
            detail::reject_unknown_keys(g, {"points_per_axis"}, "grid");
            if (g.contains("points_per_axis"))
                c.points_per_axis = g.at("points_per_axis").get<std::vector<int>>();
        }
        if (j.contains("confidence")) {
            const Json& k = j.at("confidence");
            detail::reject_unknown_keys(k,
                                        {"epsilon", "eta", "horizon", "ridge_lambda",
                                         "sub_gaussian_r", "theta_norm_bound", "per_stage_delta",
                                         "beta_scale", "beta_fixed"},
                                        "confidence");
            c.epsilon = k.value("epsilon", c.epsilon);
            c.eta = k.value("eta", c.eta);
            c.horizon = k.value("horizon", c.horizon);
            c.ridge_lambda = k.value("ridge_lambda", c.ridge_lambda);
            c.sub_gaussian_r = k.value("sub_gaussian_r", c.sub_gaussian_r);
            if (k.contains("theta_norm_bound") && !k.at("theta_norm_bound").is_null())
                c.theta_norm_bound = k.at("theta_norm_bound").get<double>();
            if (k.contains("per_stage_delta") && !k.at("per_stage_delta").is_null())
                c.per_stage_delta = k.at("per_stage_delta").get<std::vector<double>>();
            c.beta_scale = k.value("beta_scale", c.beta_scale);
            if (k.contains("beta_fixed") && !k.at("beta_fixed").is_null())
                c.beta_fixed = k.at("beta_fixed").get<double>();
        }
        if (j.contains("learner")) {
            const Json& l = j.at("learner");
            detail::reject_unknown_keys(
                l, {"type", "alpha", "gamma", "lambda", "max_order", "exploration"}, "learner");
            c.learner_type = l.value("type", c.learner_type);
            c.learner_alpha = l.value("alpha", c.learner_alpha);
            c.learner_gamma = l.value("gamma", c.learner_gamma);
            c.learner_lambda = l.value("lambda", c.learner_lambda);
            c.sarsa_max_order = l.value("max_order", c.sarsa_max_order);
            if (l.contains("exploration")) {
                const Json& x = l.at("exploration");
                detail::reject_unknown_keys(x, {"kind", "eps_max", "eps_min", "tau", "span"},
                                            "exploration");
                c.exploration_kind = x.value("kind", c.exploration_kind);
                c.eps_max = x.value("eps_max", c.eps_max);
                c.eps_min = x.value("eps_min", c.eps_min);
                if (x.contains("tau")) c.eps_tau_or_span = x.at("tau").get<double>();
                if (x.contains("span")) c.eps_tau_or_span = x.at("span").get<double>();
            }
        }
        if (j.contains("schedule")) {
            const Json& s = j.at("schedule");
            detail::reject_unknown_keys(s, {"t_grow", "t_cert", "budget_steps"}, "schedule");
            c.t_grow = s.value("t_grow", c.t_grow);
            c.t_cert = s.value("t_cert", c.t_cert);
            c.budget_steps = s.value("budget_steps", c.budget_steps);
        }
        if (j.contains("flags")) {
            const Json& f = j.at("flags");
            detail::reject_unknown_keys(
                f, {"shield_enabled", "monotone_guard", "log_trajectory"}, "flags");
            c.shield_enabled = f.value("shield_enabled", c.shield_enabled);
            c.monotone_guard = f.value("monotone_guard", c.monotone_guard);
            c.log_trajectory = f.value("log_trajectory", c.log_trajectory);
        }
        if (j.contains("shield_seed")) {
            const Json& s = j.at("shield_seed");
            detail::reject_unknown_keys(s, {"type", "box_lower", "box_upper", "brake_tolerance"},
                                        "shield_seed");
            c.seed_type = s.value("type", c.seed_type);
            if (s.contains("box_lower"))
                c.seed_box_lower = s.at("box_lower").get<std::vector<double>>();
            if (s.contains("box_upper"))
                c.seed_box_upper = s.at("box_upper").get<std::vector<double>>();
            c.brake_tolerance = s.value("brake_tolerance", c.brake_tolerance);
        }
        if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("verify")) {
            const Json& v = j.at("verify");
            detail::reject_unknown_keys(v, {"trials", "seed"}, "verify");
            c.verify_trials = v.value("trials", c.verify_trials);
            c.verify_seed = v.value("seed", c.verify_seed);
        }
        c.validate();
        return c;
    }

    void validate() const {
        if (env_type != "mountain_car" && env_type != "finite_random")
            throw ConfigError("environment.type must be mountain_car or finite_random");
        if (feature_kind != "fourier" && feature_kind != "one_hot")
            throw ConfigError("feature_map.kind must be fourier or one_hot");
        if (env_type == "mountain_car" && feature_kind != "fourier")
            throw ConfigError("mountain_car requires fourier features");
        if (env_type == "finite_random" && feature_kind != "one_hot")
            throw ConfigError("finite_random requires one_hot features");
        if (env_type == "finite_random" && (finite_states < 2 || finite_actions < 1))
            throw ConfigError("finite_random needs >= 2 states and >= 1 action");
        if (env_type == "mountain_car" && points_per_axis.size() != 2)
            throw ConfigError("mountain_car grid needs two axes");
        for (int p : points_per_axis)
            if (p < 2) throw ConfigError("grid.points_per_axis entries must be >= 2");
        if (!(epsilon >= 0.0) || !(epsilon < 1.0))
            throw ConfigError("confidence.epsilon must be in [0,1)");
        if (!(eta > 0.0) || !(eta < 1.0)) throw ConfigError("confidence.eta must be in (0,1)");
        if (horizon < 1) throw ConfigError("confidence.horizon must be >= 1");
        if (!(ridge_lambda > 0.0)) throw ConfigError("confidence.ridge_lambda must be > 0");
        if (learner_type != "sarsa" && learner_type != "tabular_q")
            throw ConfigError("learner.type must be sarsa or tabular_q");
        if (env_type == "mountain_car" && learner_type != "sarsa")
            throw ConfigError("mountain_car requires the sarsa learner");
        if (env_type == "finite_random" && learner_type != "tabular_q")
            throw ConfigError("finite_random requires the tabular_q learner");
        if (exploration_kind != "linear" && exploration_kind != "exponential")
            throw ConfigError("exploration.kind must be linear or exponential");
        if (t_grow < 1 || t_cert < 0 || budget_steps < 0)
            throw ConfigError("schedule values out of range");
        if (seed_type != "stop_box" && seed_type != "full_safe")
            throw ConfigError("shield_seed.type must be stop_box or full_safe");
        if (seeds.empty()) throw ConfigError("seeds must not be empty");
        if (verify_trials < 0) throw ConfigError("verify.trials must be >= 0");
    }

    // ---- factories -----------------------------------------------------------

    StateBox make_box() const {
        if (env_type == "mountain_car") return MountainCarConfig().safe_box;
        Vec lo(1), hi(1);
        lo[0] = 0.0;
        hi[0] = static_cast<double>(finite_states - 1);
        return StateBox(lo, hi);
    }

    LatticeGrid make_grid() const {
        if (env_type == "mountain_car") return build_grid(make_box(), points_per_axis);
        return finite_state_grid(finite_states);
    }

    int action_count() const { return env_type == "mountain_car" ? 3 : finite_actions; }

    FeatureMap make_feature_map() const {
        if (feature_kind == "fourier")
            return FeatureMap::fourier(make_box(), action_count(), fourier_max_order,
                                       feature_normalize);
        return FeatureMap::one_hot(finite_states, finite_actions);
    }

    ConfidenceParams make_params() const {
        const FeatureMap map = make_feature_map();
        ConfidenceParams p = ConfidenceParams::uniform(map.dimension(), horizon, epsilon, eta);
        p.sub_gaussian_r = sub_gaussian_r;
        if (theta_norm_bound) p.theta_norm_bound = *theta_norm_bound;
        if (per_stage_delta) p.per_stage_delta = *per_stage_delta;
        p.validate();
        return p;
    }

    OperatorOptions make_operator_options() const {
        OperatorOptions o;
        o.ridge_lambda = ridge_lambda;
        o.beta_scale = beta_scale;
        o.beta_fixed = beta_fixed;
        return o;
    }

    ExplorationSchedule make_exploration() const {
        if (exploration_kind == "exponential")
            return ExplorationSchedule::exponential(eps_max, eps_min, eps_tau_or_span);
        return ExplorationSchedule::linear(eps_max, eps_min, eps_tau_or_span);
    }

    ShieldRunConfig make_run_config() const {
        ShieldRunConfig r;
        r.t_grow = t_grow;
        r.t_cert = t_cert;
        r.budget_steps = budget_steps;
        r.shield_enabled = shield_enabled;
        r.monotone_guard = monotone_guard;
        r.log_trajectory = log_trajectory;
        return r;
    }

    FiniteMdpModel make_finite_model() const {
        Rng rng(finite_model_seed);
        RandomMdpOptions opt;
        opt.max_states = finite_states;
        opt.max_actions = finite_actions;
        opt.dirichlet_concentration = finite_concentration;
        opt.near_deterministic_fraction = finite_near_det_fraction;
        opt.sink_weight = finite_sink_weight;
        FiniteMdpModel m = random_mdp(rng, opt);
        // pin the requested sizes exactly (random_mdp draws them uniformly)
        while (m.state_count != finite_states || m.action_count != finite_actions)
            m = random_mdp(rng, opt);
        return m;
    }

    LatticeMask make_safe_mask(const LatticeGrid& grid) const {
        return LatticeMask(grid.total, true);
    }

    /// Initial shield per the configured seed type. stop_box restricts to a
    /// sub-box with a braking action map (thrust against the velocity sign);
    /// full_safe is the permissive all-points/all-actions seed.
    ShieldState make_shield_seed(const LatticeGrid& grid) const {
        ShieldState s;
        s.horizon = horizon;
        s.action_maps.assign(static_cast<std::size_t>(horizon),
                             StageActionMap{std::vector<std::uint32_t>(
                                                static_cast<std::size_t>(grid.total), 0u),
                                            std::vector<std::int32_t>(
                                                static_cast<std::size_t>(grid.total), -1)});
        const std::uint32_t all_actions = (1u << action_count()) - 1u;
        if (seed_type == "full_safe" || env_type == "finite_random") {
            s.omega_hat = LatticeMask(grid.total, true);
            for (auto& amap : s.action_maps) {
                std::fill(amap.safe_sets.begin(), amap.safe_sets.end(), all_actions);
                std::fill(amap.continuation.begin(), amap.continuation.end(), 0);
            }
            return s;
        }
        if (seed_box_lower.size() != 2 || seed_box_upper.size() != 2)
            throw ConfigError("stop_box seed needs 2-d box bounds");
        s.omega_hat = LatticeMask(grid.total, false);
        for (std::int64_t k = 0; k < grid.total; ++k) {
            const Vec p = grid.point(k);
            const bool inside = p[0] >= seed_box_lower[0] && p[0] <= seed_box_upper[0] &&
                                p[1] >= seed_box_lower[1] && p[1] <= seed_box_upper[1];
            if (!inside) continue;
            s.omega_hat.set(k, true);
            int brake = 1;
            if (p[1] > brake_tolerance)
                brake = 0;
            else if (p[1] < -brake_tolerance)
                brake = 2;
            for (auto& amap : s.action_maps) {
                amap.safe_sets[static_cast<std::size_t>(k)] = (1u << brake);
                amap.continuation[static_cast<std::size_t>(k)] = brake;
            }
        }
        if (!s.omega_hat.any())
            throw ConfigError("stop_box seed does not cover any lattice point");
        return s;
    }
};

} // namespace pcis
