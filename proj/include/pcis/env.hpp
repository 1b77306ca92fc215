#pragma once

#include "pcis/oracle.hpp"
#include "pcis/rng.hpp"
#include "pcis/types.hpp"

#include <cmath>
#include <stdexcept>

namespace pcis {

struct EnvState {
    Vec observation;
    double reward = 0.0;
    bool terminal = false;    // goal reached
    bool unsafe_exit = false; // left the safe set
};

/// Modified unclipped MountainCar: the usual boundary clipping/reset is
/// disabled so excursions outside the safe box are observable.
struct MountainCarConfig {
    double thrust_gain = 1e-3;
    double gravity_gain = 2.5e-3;
    double goal_position = 0.5;
    double goal_min_velocity = 0.0;
    StateBox safe_box;
    double init_position_lo = -0.6;
    double init_position_hi = -0.4;

    MountainCarConfig() {
        Vec lo(2), hi(2);
        lo << -1.5, -0.07;
        hi << 0.6, 0.07;
        safe_box = StateBox(lo, hi);
    }
};

/// v' = v + thrust*(u-1) - gravity*cos(3x);  x' = x + v'. No clipping.
/// Reward -1 at non-goal states, 0 at the goal (x' >= 0.5 and v' >= 0).
inline EnvState mc_step(const Vec& state, int action, const MountainCarConfig& cfg) {
    if (action < 0 || action > 2) throw std::invalid_argument("mc_step: action must be in {0,1,2}");
    const double x = state[0];
    const double v = state[1];
    const double v_next = v + cfg.thrust_gain * (action - 1) - cfg.gravity_gain * std::cos(3.0 * x);
    const double x_next = x + v_next;
    EnvState out;
    out.observation = Vec(2);
    out.observation << x_next, v_next;
    out.terminal = (x_next >= cfg.goal_position && v_next >= cfg.goal_min_velocity);
    out.unsafe_exit = !cfg.safe_box.contains(out.observation);
    out.reward = out.terminal ? 0.0 : -1.0;
    return out;
}

/// x0 ~ U([-0.6,-0.4]), v0 = 0.
inline EnvState mc_reset(Rng& rng, const MountainCarConfig& cfg) {
    EnvState out;
    out.observation = Vec(2);
    out.observation << uniform(rng, cfg.init_position_lo, cfg.init_position_hi), 0.0;
    return out;
}

class MountainCarEnv {
public:
    MountainCarEnv() = default;
    explicit MountainCarEnv(MountainCarConfig cfg) : cfg_(std::move(cfg)) {}

    int action_count() const { return 3; }
    const MountainCarConfig& config() const { return cfg_; }
    const Vec& state() const { return state_; }

    EnvState reset(Rng& rng) {
        EnvState s = mc_reset(rng, cfg_);
        state_ = s.observation;
        return s;
    }

    EnvState step(int action, Rng& /*rng*/) {
        EnvState s = mc_step(state_, action, cfg_);
        state_ = s.observation;
        return s;
    }

private:
    MountainCarConfig cfg_;
    Vec state_ = Vec::Zero(2);
};

/// Finite-MDP wrapper with the same stepping interface; observations are 1-d
/// index vectors and entering the sink flags an unsafe exit.
class FiniteEnv {
public:
    explicit FiniteEnv(FiniteMdpModel model) : model_(std::move(model)) {
        model_.validate();
        for (int x = 0; x < model_.state_count; ++x)
            if (model_.safe_states[x]) safe_idx_.push_back(x);
        if (safe_idx_.empty()) throw std::invalid_argument("FiniteEnv: no safe states");
    }

    int action_count() const { return model_.action_count; }
    const FiniteMdpModel& model() const { return model_; }
    const Vec& state() const { return obs_; }

    EnvState reset(Rng& rng) {
        state_ = safe_idx_[uniform_int(rng, 0, static_cast<int>(safe_idx_.size()) - 1)];
        obs_ = Vec::Constant(1, static_cast<double>(state_));
        EnvState s;
        s.observation = obs_;
        return s;
    }

    EnvState step(int action, Rng& rng) {
        if (action < 0 || action >= model_.action_count)
            throw std::invalid_argument("FiniteEnv: action out of range");
        const double r = uniform01(rng);
        double acc = 0.0;
        int next = model_.sink();
        for (int y = 0; y <= model_.state_count; ++y) {
            acc += model_.prob(state_, action, y);
            if (r <= acc) {
                next = y;
                break;
            }
        }
        state_ = next;
        obs_ = Vec::Constant(1, static_cast<double>(next));
        EnvState out;
        out.observation = obs_;
        out.reward = -1.0;
        out.unsafe_exit = (next == model_.sink());
        return out;
    }

private:
    FiniteMdpModel model_;
    std::vector<int> safe_idx_;
    int state_ = 0;
    Vec obs_ = Vec::Zero(1);
};

inline FiniteEnv finite_env_wrap(FiniteMdpModel model) { return FiniteEnv(std::move(model)); }

} // namespace pcis
