#pragma once

#include "pcis/types.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace pcis {

enum class FeatureKind { Fourier, OneHotTabular };

/// State-action feature map phi(x,u) with an analytic per-state-coordinate
/// Lipschitz bound. Two constructions:
///
///  - Fourier: phi(s,u) = e_u (x) psi(s) where psi stacks cos(pi * c^T s_bar)
///    over the multi-index set c in {0..max_order}^n and s_bar is the state
///    rescaled to [0,1]^n. Optionally scaled by 1/sqrt((max_order+1)^n) so
///    that ||phi||_2 <= 1.
///  - OneHotTabular: phi = e_{(x,u)} on a finite state space. Exact linear
///    representation of any finite kernel, piecewise constant, L_phi = 0.
///
/// Only the block of the executed action is populated in either case.
class FeatureMap {
public:
    static FeatureMap fourier(const StateBox& box, int action_count, int max_order,
                              bool normalize = true) {
        FeatureMap m;
        m.kind_ = FeatureKind::Fourier;
        m.box_ = box;
        m.actions_ = action_count;
        m.max_order_ = max_order;
        if (action_count < 1) throw std::invalid_argument("action_count must be >= 1");
        if (max_order < 0) throw std::invalid_argument("max_order must be >= 0");
        const int n = box.dim();
        int psi_dim = 1;
        for (int i = 0; i < n; ++i) psi_dim *= (max_order + 1);
        m.psi_dim_ = psi_dim;
        m.scale_ = normalize ? 1.0 / std::sqrt(static_cast<double>(psi_dim)) : 1.0;
        m.multi_index_.resize(psi_dim, n);
        // row-major enumeration: last axis fastest
        for (int k = 0; k < psi_dim; ++k) {
            int rem = k;
            for (int i = n - 1; i >= 0; --i) {
                m.multi_index_(k, i) = rem % (max_order + 1);
                rem /= (max_order + 1);
            }
        }
        return m;
    }

    static FeatureMap one_hot(int state_count, int action_count) {
        if (state_count < 1 || action_count < 1)
            throw std::invalid_argument("one_hot: counts must be >= 1");
        FeatureMap m;
        m.kind_ = FeatureKind::OneHotTabular;
        m.actions_ = action_count;
        m.psi_dim_ = state_count;
        m.scale_ = 1.0;
        return m;
    }

    FeatureKind kind() const { return kind_; }
    int dimension() const { return actions_ * psi_dim_; }
    int action_count() const { return actions_; }
    int block_size() const { return psi_dim_; }
    int block_offset(int action) const { return check_action(action) * psi_dim_; }

    /// Supremum of ||phi(x,u)||_2.
    double norm_bound() const {
        if (kind_ == FeatureKind::OneHotTabular) return 1.0;
        return scale_ * std::sqrt(static_cast<double>(psi_dim_));
    }

    /// L_phi with the per-axis range rescaling folded in (infinity norm in
    /// state): max_c pi * sum_i c_i / range_i, times the feature scale.
    double lipschitz_bound() const {
        if (kind_ == FeatureKind::OneHotTabular) return 0.0;
        double sum_inv_range = 0.0;
        for (int i = 0; i < box_.dim(); ++i)
            sum_inv_range += 1.0 / (box_.upper[i] - box_.lower[i]);
        return scale_ * std::numbers::pi * max_order_ * sum_inv_range;
    }

    /// State-only basis psi. For Fourier this is the cosine stack on the
    /// clamped, normalized state; for one-hot it is e_{state index}.
    Vec state_basis(const Vec& state) const {
        if (kind_ == FeatureKind::OneHotTabular) {
            if (state.size() != 1)
                throw std::invalid_argument("one_hot state must be a 1-d index vector");
            const int idx = static_cast<int>(std::lround(state[0]));
            if (idx < 0 || idx >= psi_dim_)
                throw std::invalid_argument("one_hot state index out of range");
            Vec psi = Vec::Zero(psi_dim_);
            psi[idx] = 1.0;
            return psi;
        }
        const Vec xc = box_.clamp(state);
        Vec sbar(box_.dim());
        for (int i = 0; i < box_.dim(); ++i)
            sbar[i] = (xc[i] - box_.lower[i]) / (box_.upper[i] - box_.lower[i]);
        Vec psi(psi_dim_);
        for (int k = 0; k < psi_dim_; ++k) {
            double dot = 0.0;
            for (int i = 0; i < box_.dim(); ++i) dot += multi_index_(k, i) * sbar[i];
            psi[k] = scale_ * std::cos(std::numbers::pi * dot);
        }
        return psi;
    }

    /// Full stacked feature phi(x,u) = e_u (x) psi(x).
    Vec eval(const Vec& state, int action) const {
        const int u = check_action(action);
        Vec phi = Vec::Zero(dimension());
        phi.segment(u * psi_dim_, psi_dim_) = state_basis(state);
        return phi;
    }

private:
    int check_action(int action) const {
        if (action < 0 || action >= actions_)
            throw std::invalid_argument("action index out of range");
        return action;
    }

    FeatureKind kind_ = FeatureKind::OneHotTabular;
    StateBox box_;
    int actions_ = 1;
    int max_order_ = 0;
    int psi_dim_ = 1;
    double scale_ = 1.0;
    Eigen::MatrixXi multi_index_;
};

inline Vec fourier_feature(const Vec& state, int action, const StateBox& box, int max_order,
                           int action_count, bool normalize = true) {
    return FeatureMap::fourier(box, action_count, max_order, normalize).eval(state, action);
}

inline Vec one_hot_feature(int state, int action, int state_count, int action_count) {
    if (state < 0 || state >= state_count || action < 0 || action >= action_count)
        throw std::invalid_argument("one_hot_feature: index out of range");
    Vec s(1);
    s[0] = state;
    return FeatureMap::one_hot(state_count, action_count).eval(s, action);
}

inline double lipschitz_bound(const FeatureMap& map) { return map.lipschitz_bound(); }

} // namespace pcis
