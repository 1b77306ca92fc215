#pragma once

#include "pcis/features.hpp"
#include "pcis/rng.hpp"
#include "pcis/types.hpp"

#include <cmath>
#include <stdexcept>

namespace pcis {

struct ExplorationSchedule {
    enum class Kind { Exponential, Linear };
    Kind kind = Kind::Exponential;
    double eps_max = 1.0;
    double eps_min = 0.01;
    double tau_or_span = 1000.0;

    static ExplorationSchedule exponential(double eps_max, double eps_min, double tau) {
        return {Kind::Exponential, eps_max, eps_min, tau};
    }
    static ExplorationSchedule linear(double eps_max, double eps_min, double span) {
        return {Kind::Linear, eps_max, eps_min, span};
    }
};

/// Exponential: eps_min + (eps_max - eps_min) * exp(-t/tau).
/// Linear: interpolate eps_max -> eps_min over the span, then hold.
inline double epsilon_at(const ExplorationSchedule& s, std::size_t t) {
    if (s.kind == ExplorationSchedule::Kind::Exponential)
        return s.eps_min + (s.eps_max - s.eps_min) * std::exp(-static_cast<double>(t) / s.tau_or_span);
    const double frac = s.tau_or_span <= 0.0
                            ? 1.0
                            : std::min(1.0, static_cast<double>(t) / s.tau_or_span);
    return s.eps_max + (s.eps_min - s.eps_max) * frac;
}

namespace detail {
inline int argmax_lowest(const Vec& values) {
    int best = 0;
    for (int i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}
} // namespace detail

/// Linear true-online SARSA(lambda) over per-action weights on a state-only
/// basis psi(s), so Q(s,u) = w_u^T psi(s). Dutch traces; traces and the
/// Q_old bootstrap reset at episode starts. Consumes executed transitions
/// only; certification-tagged data trips an assertion.
class LinearSarsaLearner {
public:
    LinearSarsaLearner(FeatureMap state_features, double alpha, double gamma,
                       double lambda_trace, ExplorationSchedule exploration)
        : psi_(std::move(state_features)), alpha_(alpha), gamma_(gamma), lambda_(lambda_trace),
          schedule_(exploration) {
        const int d = psi_.block_size();
        const int a = psi_.action_count();
        weights_ = Mat::Zero(a, d);
        traces_ = Mat::Zero(a, d);
    }

    int action_count() const { return static_cast<int>(weights_.rows()); }
    const Mat& weights() const { return weights_; }
    const Mat& traces() const { return traces_; }
    const ExplorationSchedule& schedule() const { return schedule_; }

    /// Checkpoint restore; shape must match.
    void set_weights(const Mat& w) {
        if (w.rows() != weights_.rows() || w.cols() != weights_.cols())
            throw std::invalid_argument("set_weights: shape mismatch");
        weights_ = w;
    }

    void begin_episode() {
        traces_.setZero();
        q_old_ = 0.0;
    }

    Vec q_values(const Vec& state) const { return weights_ * psi_.state_basis(state); }

    /// epsilon(t)-greedy proposal; ties go to the lowest action index.
    int propose(const Vec& state, Rng& rng, std::size_t t) const {
        const double eps = epsilon_at(schedule_, t);
        if (uniform01(rng) < eps) return uniform_int(rng, 0, action_count() - 1);
        return detail::argmax_lowest(q_values(state));
    }

    /// One true-online step on the executed transition (s,u,r,s',u').
    void update(const Vec& s, int u, double r, const Vec& s_next, int u_next, bool is_terminal,
                DataTag tag = DataTag::Grow) {
        if (tag == DataTag::Certification)
            throw std::logic_error("certification transition routed into a learner update");
        const Vec psi_s = psi_.state_basis(s);
        const double q = weights_.row(u).dot(psi_s);
        double q_next = 0.0;
        if (!is_terminal) q_next = weights_.row(u_next).dot(psi_.state_basis(s_next));
        const double delta = r + gamma_ * q_next - q;
        const double e_dot_x = traces_.row(u).dot(psi_s);
        traces_ *= gamma_ * lambda_;
        traces_.row(u) += psi_s.transpose() - alpha_ * gamma_ * lambda_ * e_dot_x * psi_s.transpose();
        weights_ += alpha_ * (delta + q - q_old_) * traces_;
        weights_.row(u) -= alpha_ * (q - q_old_) * psi_s.transpose();
        q_old_ = is_terminal ? 0.0 : q_next;
    }

private:
    FeatureMap psi_;
    double alpha_;
    double gamma_;
    double lambda_;
    ExplorationSchedule schedule_;
    Mat weights_;
    Mat traces_;
    double q_old_ = 0.0;
};

/// One-step tabular Q-learning on index observations; oracle-friendly
/// learner for finite-MDP shielding tests.
class TabularQLearner {
public:
    TabularQLearner(int state_count, int action_count, double alpha, double gamma,
                    ExplorationSchedule exploration)
        : alpha_(alpha), gamma_(gamma), schedule_(exploration) {
        q_ = Mat::Zero(state_count, action_count);
    }

    int action_count() const { return static_cast<int>(q_.cols()); }
    const Mat& table() const { return q_; }

    void begin_episode() {}

    Vec q_values(const Vec& state) const { return q_.row(index_of(state)).transpose(); }

    int propose(const Vec& state, Rng& rng, std::size_t t) const {
        const double eps = epsilon_at(schedule_, t);
        if (uniform01(rng) < eps) return uniform_int(rng, 0, action_count() - 1);
        return detail::argmax_lowest(q_values(state));
    }

    void update(const Vec& s, int u, double r, const Vec& s_next, int /*u_next*/,
                bool is_terminal, DataTag tag = DataTag::Grow) {
        if (tag == DataTag::Certification)
            throw std::logic_error("certification transition routed into a learner update");
        const int x = index_of(s);
        double bootstrap = 0.0;
        if (!is_terminal) bootstrap = gamma_ * q_.row(index_of(s_next)).maxCoeff();
        q_(x, u) += alpha_ * (r + bootstrap - q_(x, u));
    }

private:
    int index_of(const Vec& state) const {
        const int idx = static_cast<int>(std::lround(state[0]));
        if (idx < 0 || idx >= q_.rows())
            throw std::invalid_argument("TabularQLearner: state index out of range");
        return idx;
    }

    double alpha_;
    double gamma_;
    ExplorationSchedule schedule_;
    Mat q_;
};

template <typename Learner>
int propose_action(const Learner& learner, const Vec& state, Rng& rng, std::size_t t) {
    return learner.propose(state, rng, t);
}

inline void sarsa_update(LinearSarsaLearner& learner, const Vec& s, int u, double r,
                         const Vec& s_next, int u_next, bool is_terminal,
                         DataTag tag = DataTag::Grow) {
    learner.update(s, u, r, s_next, u_next, is_terminal, tag);
}

inline void tabular_q_update(TabularQLearner& learner, const Vec& s, int u, double r,
                             const Vec& s_next, bool is_terminal, DataTag tag = DataTag::Grow) {
    learner.update(s, u, r, s_next, 0, is_terminal, tag);
}

} // namespace pcis
