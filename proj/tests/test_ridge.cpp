#include "pcis/ridge.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace pcis;
using Catch::Approx;

namespace {

// Independent oracle: dense normal-equations solve (lambda*I + D^T D) theta = D^T y.
Vec dense_ridge_solve(const Mat& features, const Vec& targets, double lambda) {
    const int d = static_cast<int>(features.cols());
    Mat a = Mat::Identity(d, d) * lambda + features.transpose() * features;
    Vec b = features.transpose() * targets;
    return a.ldlt().solve(b);
}

} // namespace

TEST_CASE("ridge_init builds lambda-scaled identity") {
    const RidgeStage s3 = ridge_init(3, 1.0);
    REQUIRE(s3.gram().isApprox(Mat::Identity(3, 3)));
    REQUIRE(s3.theta_hat().isZero());
    REQUIRE(s3.sample_count() == 0);

    const RidgeStage s1 = ridge_init(1, 2.0);
    REQUIRE(s1.gram()(0, 0) == Approx(2.0));
    REQUIRE(s1.gram_inverse()(0, 0) == Approx(0.5));

    const RidgeStage s108 = ridge_init(108, 1.0);
    REQUIRE(s108.gram().trace() == Approx(108.0));

    REQUIRE_THROWS_AS(ridge_init(0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(ridge_init(3, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(ridge_init(3, -1.0), std::invalid_argument);
}

TEST_CASE("ridge_fit: empty batch, closed form, purity") {
    const RidgeStage fresh = ridge_init(4, 1.0);
    const RidgeStage empty = ridge_fit(fresh, Mat::Zero(0, 4), Vec::Zero(0));
    REQUIRE(empty.theta_hat().isZero());
    REQUIRE(empty.sample_count() == 0);

    Mat one_row = Mat::Zero(1, 4);
    one_row(0, 0) = 1.0;
    Vec y1(1);
    y1 << 1.0;
    const RidgeStage one = ridge_fit(fresh, one_row, y1);
    REQUIRE(one.gram()(0, 0) == Approx(2.0));
    REQUIRE(one.gram()(1, 1) == Approx(1.0));
    REQUIRE(one.theta_hat()[0] == Approx(0.5));
    REQUIRE(one.theta_hat()[1] == Approx(0.0));
    // input stage untouched
    REQUIRE(fresh.sample_count() == 0);
    REQUIRE(fresh.gram()(0, 0) == Approx(1.0));
}

TEST_CASE("ridge_fit matches the dense normal-equations oracle") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 2 + static_cast<int>(rng() % 7);       // up to 8
        const int t = 1 + static_cast<int>(rng() % 50);
        const double lambda = 0.5 + unif(rng) * 2.0;
        Mat features(t, d);
        Vec targets(t);
        for (int i = 0; i < t; ++i) {
            Vec row(d);
            for (int j = 0; j < d; ++j) row[j] = unif(rng) * 2.0 - 1.0;
            row /= std::max(1.0, row.norm()); // keep ||phi|| <= 1
            features.row(i) = row.transpose();
            targets[i] = unif(rng);
        }
        const RidgeStage fitted = ridge_fit(ridge_init(d, lambda), features, targets);
        const Vec oracle = dense_ridge_solve(features, targets, lambda);
        REQUIRE((fitted.theta_hat() - oracle).norm() < 1e-8);
        REQUIRE(fitted.sample_count() == static_cast<std::size_t>(t));
    }
}

TEST_CASE("ridge_fit rejects targets outside [0,1]") {
    Mat row = Mat::Ones(1, 2) / std::sqrt(2.0);
    Vec bad(1);
    bad << 1.5;
    REQUIRE_THROWS_AS(ridge_fit(ridge_init(2, 1.0), row, bad), std::invalid_argument);
    bad << -0.2;
    REQUIRE_THROWS_AS(ridge_fit(ridge_init(2, 1.0), row, bad), std::invalid_argument);
}

TEST_CASE("sigma: identity Gram, rank-one update, zero feature") {
    RidgeStage stage = ridge_init(3, 1.0);
    Vec e1 = Vec::Zero(3);
    e1[0] = 1.0;
    REQUIRE(stage.sigma(e1) == Approx(1.0));
    REQUIRE(stage.sigma(Vec::Zero(3)) == Approx(0.0));

    stage.absorb(e1, 1.0);
    REQUIRE(stage.sigma(e1) == Approx(std::sqrt(0.5)).epsilon(1e-12));

    Vec wrong(2);
    REQUIRE_THROWS_AS(stage.sigma(wrong), std::invalid_argument);
}

TEST_CASE("sigma closed form sqrt(1/(lambda+k)) for repeated unit rows") {
    for (double lambda : {0.5, 1.0, 2.0}) {
        RidgeStage stage = ridge_init(5, lambda);
        Vec e2 = Vec::Zero(5);
        e2[2] = 1.0;
        for (int k = 1; k <= 40; ++k) {
            stage.absorb(e2, 0.7);
            REQUIRE(stage.sigma(e2) == Approx(std::sqrt(1.0 / (lambda + k))).epsilon(1e-10));
        }
    }
}

TEST_CASE("sigma never increases when rows are absorbed") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 3 + static_cast<int>(rng() % 6);
        RidgeStage stage = ridge_init(d, 1.0);
        std::vector<Vec> probes;
        for (int p = 0; p < 5; ++p) {
            Vec v(d);
            for (int j = 0; j < d; ++j) v[j] = unif(rng);
            probes.push_back(v / std::max(1.0, v.norm()));
        }
        std::vector<double> before;
        for (const Vec& v : probes) before.push_back(stage.sigma(v));
        for (int r = 0; r < 30; ++r) {
            Vec row(d);
            for (int j = 0; j < d; ++j) row[j] = unif(rng);
            stage.absorb(row / std::max(1.0, row.norm()), 0.5);
            for (std::size_t p = 0; p < probes.size(); ++p) {
                const double after = stage.sigma(probes[p]);
                REQUIRE(after <= before[p] + 1e-12);
                before[p] = after;
            }
        }
    }
}

TEST_CASE("inverse and Cholesky sigma paths agree above the dimension cutoff") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    RidgeStage stage = ridge_init(40, 1.0);
    for (int r = 0; r < 500; ++r) {
        Vec row(40);
        for (int j = 0; j < 40; ++j) row[j] = unif(rng);
        stage.absorb(row / std::max(1.0, row.norm()), 0.3);
    }
    for (int p = 0; p < 50; ++p) {
        Vec v(40);
        for (int j = 0; j < 40; ++j) v[j] = unif(rng);
        REQUIRE(stage.sigma_via_inverse(v) == Approx(stage.sigma_via_cholesky(v)).margin(1e-8));
    }
    REQUIRE(stage.inverse_drift() < 1e-10);
}

TEST_CASE("rank-one inverse maintenance stays within the drift invariant") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    RidgeStage stage = ridge_init(8, 1.0);
    for (int r = 0; r < 5000; ++r) { // crosses several refactorization cycles
        Vec row(8);
        for (int j = 0; j < 8; ++j) row[j] = unif(rng);
        stage.absorb(row / std::max(1.0, row.norm()), 0.5);
    }
    REQUIRE(stage.inverse_drift() < 1e-10);
    REQUIRE(stage.sample_count() == 5000);
}

TEST_CASE("beta_default: limits, monotonicity, pinned value") {
    ConfidenceParams p = ConfidenceParams::uniform(2, 1, 0.1, 0.9);
    p.per_stage_delta = {1.0 - 1e-12}; // delta -> 1 kills the log term
    REQUIRE(beta_default(p, 0, 0, 1.0) == Approx(std::sqrt(2.0)).margin(1e-5));

    ConfidenceParams q = ConfidenceParams::uniform(2, 1, 0.1, 0.9);
    REQUIRE(beta_default(q, 0, 100, 1.0) >= beta_default(q, 0, 10, 1.0));

    ConfidenceParams lo = ConfidenceParams::uniform(2, 1, 0.1, 0.9);
    lo.per_stage_delta = {0.05};
    ConfidenceParams hi = ConfidenceParams::uniform(2, 1, 0.1, 0.9);
    hi.per_stage_delta = {0.0999};
    REQUIRE(beta_default(lo, 0, 50, 1.0) >= beta_default(hi, 0, 50, 1.0));

    // d=2, T=100, delta=0.05, lambda=1, R=1/2, S=sqrt(2)
    ConfidenceParams pinned = ConfidenceParams::uniform(2, 1, 0.1, 0.9);
    pinned.per_stage_delta = {0.05};
    REQUIRE(beta_default(pinned, 0, 100, 1.0) == Approx(3.3649637758032065).epsilon(1e-12));

    ConfidenceParams bad = ConfidenceParams::uniform(2, 1, 0.1, 0.9);
    bad.per_stage_delta = {1.5};
    REQUIRE_THROWS_AS(beta_default(bad, 0, 10, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(beta_default(pinned, 1, 10, 1.0), std::invalid_argument);
}

TEST_CASE("confidence params validation") {
    REQUIRE_THROWS_AS(ConfidenceParams::uniform(2, 0, 0.1, 0.9), std::invalid_argument);
    ConfidenceParams p = ConfidenceParams::uniform(3, 2, 0.1, 0.9);
    p.per_stage_delta = {0.2, 0.2}; // sums past 1 - eta
    REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
    p.per_stage_delta = {0.05, 0.05};
    REQUIRE_NOTHROW(p.validate());
}

TEST_CASE("lower_confidence arithmetic") {
    RidgeStage zero = ridge_init(3, 1.0);
    zero.set_beta(0.0);
    Vec phi(3);
    phi << 0.3, -0.2, 0.5;
    REQUIRE(lower_confidence(zero, phi) == Approx(0.0));

    RidgeStage stage = ridge_init(2, 1.0);
    Vec e1 = Vec::Zero(2);
    e1[0] = 1.0;
    // force theta_hat = e1 by absorbing e1 with y=1 twice (theta -> 2/3), easier:
    // use a fresh stage and check the identity directly instead
    stage.set_beta(1.0);
    const double ell = lower_confidence(stage, e1);
    REQUIRE(ell == Approx(0.0 - 1.0 * 1.0)); // theta=0, sigma(e1)=1

    // penalty subtracts exactly
    const double with_penalty = lower_confidence(stage, e1, 0.25);
    REQUIRE(ell - with_penalty == Approx(0.25).margin(1e-12));
}

TEST_CASE("lower-confidence coverage on a synthetic linear model") {
    // y = theta^T phi + noise, theta and phi positive so targets stay in [0,1];
    // noise is U(-0.15, 0.15), well inside the R = 1/2 sub-Gaussian budget, so
    // the empirical coverage must clear (1-delta) - binomial slack.
    const int d = 3;
    const int n_train = 30;
    const int n_test = 20;
    const int trials = 500;
    const double delta = 0.1;

    ConfidenceParams params = ConfidenceParams::uniform(d, 1, 0.1, 0.9);
    params.per_stage_delta = {delta};

    std::mt19937_64 rng(2025);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    int covered_trials = 0;
    for (int trial = 0; trial < trials; ++trial) {
        Vec theta(d);
        for (int j = 0; j < d; ++j) theta[j] = 0.15 + 0.2 * unif(rng);

        auto draw_phi = [&]() {
            Vec g(d);
            for (int j = 0; j < d; ++j) g[j] = std::abs(normal(rng));
            return Vec(g / g.norm());
        };

        RidgeStage stage = ridge_init(d, 1.0);
        for (int t = 0; t < n_train; ++t) {
            const Vec phi = draw_phi();
            const double y = theta.dot(phi) + (unif(rng) - 0.5) * 0.3;
            stage.absorb(phi, clip01(y));
        }
        stage.set_beta(beta_default(params, 0, stage.sample_count(), 1.0));

        bool all_covered = true;
        for (int t = 0; t < n_test; ++t) {
            const Vec phi = draw_phi();
            if (theta.dot(phi) < lower_confidence(stage, phi)) all_covered = false;
        }
        if (all_covered) ++covered_trials;
    }
    const double rate = static_cast<double>(covered_trials) / trials;
    const double slack = 3.0 * std::sqrt(delta * (1.0 - delta) / trials);
    REQUIRE(rate >= (1.0 - delta) - slack);
}
