#pragma once

#include "pcis/types.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace pcis {

/// Per-stage regularized least-squares state: Gram matrix V = lambda*I + sum
/// phi phi^T, its inverse, the estimate theta_hat = V^{-1} sum phi*y and the
/// confidence width multiplier beta. A fitted stage is an immutable snapshot;
/// fitting is single-writer.
class RidgeStage {
public:
    RidgeStage() = default;

    RidgeStage(int dimension, double ridge_lambda, std::size_t refactor_interval = 1000)
        : lambda_(ridge_lambda), refactor_interval_(refactor_interval) {
        if (dimension < 1) throw std::invalid_argument("ridge_init: dimension must be >= 1");
        if (!(ridge_lambda > 0.0)) throw std::invalid_argument("ridge_init: lambda must be > 0");
        gram_ = Mat::Identity(dimension, dimension) * lambda_;
        gram_inv_ = Mat::Identity(dimension, dimension) / lambda_;
        xty_ = Vec::Zero(dimension);
        theta_ = Vec::Zero(dimension);
        chol_.compute(gram_);
    }

    int dimension() const { return static_cast<int>(gram_.rows()); }
    std::size_t sample_count() const { return count_; }
    double ridge_lambda() const { return lambda_; }
    const Mat& gram() const { return gram_; }
    const Mat& gram_inverse() const { return gram_inv_; }
    const Vec& theta_hat() const { return theta_; }

    double beta() const { return beta_; }
    void set_beta(double b) {
        if (b < 0.0) throw std::invalid_argument("beta must be nonnegative");
        beta_ = b;
    }

    /// Absorb one (phi, y) row. Rank-one Sherman-Morrison on the inverse and
    /// a rank-one Cholesky update, with a full refactorization every
    /// refactor_interval rows to bound drift.
    void absorb(const Vec& phi, double y) {
        check_dim(phi);
        if (y < -1e-12 || y > 1.0 + 1e-12)
            throw std::invalid_argument("ridge_fit: target outside [0,1]");
        gram_.noalias() += phi * phi.transpose();
        const Vec vinv_phi = gram_inv_ * phi;
        const double denom = 1.0 + phi.dot(vinv_phi);
        gram_inv_.noalias() -= (vinv_phi * vinv_phi.transpose()) / denom;
        chol_.rankUpdate(phi, 1.0);
        xty_.noalias() += phi * y;
        ++count_;
        if (++since_refactor_ >= refactor_interval_) refactorize();
        theta_.noalias() = gram_inv_ * xty_;
    }

    /// sigma(phi) = sqrt(phi^T V^{-1} phi). Small dimensions read the
    /// maintained inverse; larger ones go through the Cholesky factor, which
    /// conditions better. Both paths agree to 1e-8 (tested).
    double sigma(const Vec& phi) const {
        check_dim(phi);
        double s2;
        if (dimension() > 32) {
            const Vec z = chol_.matrixL().solve(phi);
            s2 = z.squaredNorm();
        } else {
            s2 = phi.dot(gram_inv_ * phi);
        }
        return std::sqrt(s2 < 0.0 ? 0.0 : s2);
    }

    double sigma_via_inverse(const Vec& phi) const {
        check_dim(phi);
        const double s2 = phi.dot(gram_inv_ * phi);
        return std::sqrt(s2 < 0.0 ? 0.0 : s2);
    }

    double sigma_via_cholesky(const Vec& phi) const {
        check_dim(phi);
        const Vec z = chol_.matrixL().solve(phi);
        return std::sqrt(z.squaredNorm());
    }

    /// Frobenius norm of V * V^{-1} - I; the maintained-inverse invariant.
    double inverse_drift() const {
        return (gram_ * gram_inv_ - Mat::Identity(dimension(), dimension())).norm();
    }

private:
    void check_dim(const Vec& phi) const {
        if (phi.size() != gram_.rows())
            throw std::invalid_argument("RidgeStage: feature dimension mismatch");
    }

    void refactorize() {
        chol_.compute(gram_);
        gram_inv_ = chol_.solve(Mat::Identity(dimension(), dimension()));
        since_refactor_ = 0;
    }

    Mat gram_;
    Mat gram_inv_;
    Eigen::LLT<Mat> chol_;
    Vec xty_;
    Vec theta_;
    double beta_ = 0.0;
    double lambda_ = 1.0;
    std::size_t count_ = 0;
    std::size_t since_refactor_ = 0;
    std::size_t refactor_interval_ = 1000;
};

inline RidgeStage ridge_init(int dimension, double ridge_lambda = 1.0) {
    return RidgeStage(dimension, ridge_lambda);
}

/// Pure batch fit: returns a new stage with the rows absorbed, input
/// untouched. Targets must already be clipped to [0,1] (the recursion
/// guarantees this; anything else is a contract violation).
inline RidgeStage ridge_fit(const RidgeStage& stage, const Mat& features, const Vec& targets) {
    if (features.rows() != targets.size())
        throw std::invalid_argument("ridge_fit: row/target count mismatch");
    RidgeStage out = stage;
    for (Eigen::Index t = 0; t < features.rows(); ++t)
        out.absorb(features.row(t).transpose(), targets[t]);
    return out;
}

inline double sigma(const RidgeStage& stage, const Vec& phi) { return stage.sigma(phi); }

/// Confidence configuration shared by every backward recursion.
struct ConfidenceParams {
    double epsilon = 0.1;              // safety tolerance
    double eta = 0.9;                  // confidence level
    std::vector<double> per_stage_delta; // delta_j, one per backward stage
    int horizon = 1;                   // N
    int dimension = 1;                 // feature dimension d
    double sub_gaussian_r = 0.5;       // R
    double theta_norm_bound = 1.0;     // S

    void validate() const {
        if (!(epsilon > 0.0) || !(epsilon < 1.0))
            throw std::invalid_argument("epsilon must be in (0,1)");
        if (!(eta > 0.0) || !(eta < 1.0))
            throw std::invalid_argument("eta must be in (0,1)");
        if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
        if (dimension < 1) throw std::invalid_argument("dimension must be >= 1");
        if (static_cast<int>(per_stage_delta.size()) != horizon)
            throw std::invalid_argument("per_stage_delta must have one entry per stage");
        double sum = 0.0;
        for (double d : per_stage_delta) {
            if (!(d > 0.0) || !(d < 1.0))
                throw std::invalid_argument("delta_j must be in (0,1)");
            sum += d;
        }
        if (sum > 1.0 - eta + 1e-12)
            throw std::invalid_argument("sum of delta_j must be <= 1 - eta");
    }

    /// Uniform split delta_j = (1-eta)/N with S defaulted to sqrt(d).
    static ConfidenceParams uniform(int dimension, int horizon, double epsilon, double eta) {
        ConfidenceParams p;
        p.epsilon = epsilon;
        p.eta = eta;
        p.horizon = horizon;
        p.dimension = dimension;
        p.per_stage_delta.assign(static_cast<std::size_t>(horizon), (1.0 - eta) / horizon);
        p.theta_norm_bound = std::sqrt(static_cast<double>(dimension));
        p.validate();
        return p;
    }
};

/// beta_j = R*sqrt(d*log((1 + T_j/lambda)/delta_j)) + sqrt(lambda)*S.
/// Nondecreasing in T_j, nonincreasing in delta_j.
inline double beta_default(const ConfidenceParams& params, int stage_index,
                           std::size_t sample_count, double ridge_lambda) {
    if (stage_index < 0 || stage_index >= params.horizon)
        throw std::invalid_argument("beta_default: stage index out of range");
    const double delta = params.per_stage_delta[static_cast<std::size_t>(stage_index)];
    if (!(delta > 0.0) || !(delta < 1.0))
        throw std::invalid_argument("beta_default: delta_j must be in (0,1)");
    const double t = static_cast<double>(sample_count);
    const double log_term = std::log((1.0 + t / ridge_lambda) / delta);
    return params.sub_gaussian_r * std::sqrt(params.dimension * log_term) +
           std::sqrt(ridge_lambda) * params.theta_norm_bound;
}

/// l(phi) = theta_hat^T phi - penalty - beta*sigma(phi).
/// Unclipped; the recursion applies the saturation. penalty is 0 for the
/// finite-state variant and d*L_phi*delta_x for the lattice variant.
inline double lower_confidence(const RidgeStage& stage, const Vec& phi,
                               double discretization_penalty = 0.0) {
    return stage.theta_hat().dot(phi) - discretization_penalty - stage.beta() * stage.sigma(phi);
}

} // namespace pcis
