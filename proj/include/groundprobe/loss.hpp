#pragma once
// Three-term training objective and its analytic gradient:
//
//   total = bce(base; w_plus) + beta * brier(base) + lambda * rank(base, blank)
//
// bce   mean of w_plus * y * softplus(-l) + (1 - y) * softplus(l)
// brier mean of (p - y)^2
// rank  sum_i y_i * relu(gamma - (p_base_i - p_blank_i)) / (sum_i y_i + 1e-8)

#include <cstddef>
#include <span>
#include <vector>

#include "groundprobe/error.hpp"
#include "groundprobe/probe.hpp"

namespace groundprobe {

inline constexpr double kRankEpsilon = 1e-8;

namespace detail {
inline void check_batch(std::size_t a, std::size_t b, const char* what) {
    require(a >= 1, ErrorKind::validation, std::string(what) + ": empty batch");
    require(a == b, ErrorKind::validation, std::string(what) + ": length mismatch");
}
}  // namespace detail

inline double loss_bce(std::span<const double> logits, std::span<const int> y, double w_plus) {
    detail::check_batch(logits.size(), y.size(), "loss_bce");
    require(w_plus > 0.0, ErrorKind::validation, "loss_bce: w_plus must be positive");
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        sum += y[i] == 1 ? w_plus * softplus(-logits[i]) : softplus(logits[i]);
    }
    return sum / static_cast<double>(logits.size());
}

inline double loss_brier(std::span<const double> probs, std::span<const int> y) {
    detail::check_batch(probs.size(), y.size(), "loss_brier");
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double d = probs[i] - static_cast<double>(y[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(probs.size());
}

inline double loss_rank(std::span<const double> p_base, std::span<const double> p_blank, std::span<const int> y,
                        double gamma) {
    require(p_base.size() == p_blank.size() && p_base.size() == y.size(), ErrorKind::validation,
            "loss_rank: length mismatch");
    require(gamma > 0.0, ErrorKind::validation, "loss_rank: gamma must be positive");
    double violation = 0.0;
    double positives = 0.0;
    for (std::size_t i = 0; i < p_base.size(); ++i) {
        if (y[i] != 1) continue;
        positives += 1.0;
        violation += std::max(0.0, gamma - (p_base[i] - p_blank[i]));
    }
    return violation / (positives + kRankEpsilon);
}

struct LossWeights {
    double w_plus = 1.0;
    double beta = 0.0;
    double lambda = 0.0;
    double gamma = 0.1;
};

struct LossBreakdown {
    double bce = 0.0;
    double brier = 0.0;
    double rank = 0.0;
    double total = 0.0;
};

// Rows of `base` and `blank` are paired samples. `blank` may be empty when
// the rank weight is zero.
struct Batch {
    Matrix base;
    Matrix blank;
    std::vector<int> y;
};

namespace detail {

struct ViewPass {
    ForwardCache cache;
    std::vector<double> logits;
    std::vector<double> probs;
};

inline ViewPass run_view(const Probe& probe, const Matrix& features, Mode mode, Rng* rng) {
    ViewPass pass;
    pass.cache = forward_batch(probe, features, mode, rng);
    pass.logits.assign(pass.cache.logits.data(), pass.cache.logits.data() + pass.cache.logits.size());
    pass.probs.resize(pass.logits.size());
    for (std::size_t i = 0; i < pass.logits.size(); ++i) pass.probs[i] = stable_sigmoid(pass.logits[i]);
    return pass;
}

inline void check_paired(const Batch& batch) {
    require(!batch.y.empty(), ErrorKind::validation, "empty batch");
    require(batch.base.rows() == static_cast<Eigen::Index>(batch.y.size()), ErrorKind::validation,
            "batch label count does not match base rows");
    require(batch.blank.rows() == batch.base.rows(), ErrorKind::validation,
            "rank term needs a blank view for every sample (paired input required)");
}

}  // namespace detail

// Evaluates every term from one forward application per view. In train mode
// the base view draws its dropout masks first, then the blank view.
inline LossBreakdown loss_total(const Batch& batch, const Probe& probe, const LossWeights& w, Mode mode,
                                Rng* rng = nullptr) {
    detail::check_paired(batch);
    const auto base = detail::run_view(probe, batch.base, mode, rng);
    const auto blank = detail::run_view(probe, batch.blank, mode, rng);
    LossBreakdown out;
    out.bce = loss_bce(base.logits, batch.y, w.w_plus);
    out.brier = loss_brier(base.probs, batch.y);
    out.rank = loss_rank(base.probs, blank.probs, batch.y, w.gamma);
    out.total = out.bce + w.beta * out.brier + w.lambda * out.rank;
    return out;
}

struct LossAndGradients {
    LossBreakdown loss;  // rank is reported as 0 when lambda == 0 (blank view not evaluated)
    ParameterSet grads;
};

// Exact gradient of loss_total with respect to every probe parameter. Both
// views flow through the shared weights. With lambda == 0 the blank view is
// never read, so the result cannot depend on it.
inline LossAndGradients gradients(const Batch& batch, const Probe& probe, const LossWeights& w, Mode mode,
                                  Rng* rng = nullptr) {
    const bool use_rank = w.lambda != 0.0;
    if (use_rank) {
        detail::check_paired(batch);
    } else {
        require(!batch.y.empty() && batch.base.rows() == static_cast<Eigen::Index>(batch.y.size()),
                ErrorKind::validation, "batch label count does not match base rows");
    }
    const std::size_t n = batch.y.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    const auto base = detail::run_view(probe, batch.base, mode, rng);
    LossAndGradients out;
    out.loss.bce = loss_bce(base.logits, batch.y, w.w_plus);
    out.loss.brier = loss_brier(base.probs, batch.y);

    ColVector d_base(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double p = base.probs[i];
        const double yi = static_cast<double>(batch.y[i]);
        // d softplus(-l)/dl = -(1 - p); d softplus(l)/dl = p
        const double g_bce = batch.y[i] == 1 ? -w.w_plus * (1.0 - p) : p;
        const double g_brier = 2.0 * (p - yi) * p * (1.0 - p);
        d_base(static_cast<Eigen::Index>(i)) = inv_n * (g_bce + w.beta * g_brier);
    }

    out.grads = zeros_like(probe.layers);
    if (use_rank) {
        const auto blank = detail::run_view(probe, batch.blank, mode, rng);
        out.loss.rank = loss_rank(base.probs, blank.probs, batch.y, w.gamma);
        double positives = 0.0;
        for (const int yi : batch.y) positives += yi == 1 ? 1.0 : 0.0;
        const double scale = w.lambda / (positives + kRankEpsilon);
        ColVector d_blank = ColVector::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            if (batch.y[i] != 1) continue;
            const double pb = base.probs[i];
            const double pz = blank.probs[i];
            if (w.gamma - (pb - pz) <= 0.0) continue;
            d_base(static_cast<Eigen::Index>(i)) -= scale * pb * (1.0 - pb);
            d_blank(static_cast<Eigen::Index>(i)) = scale * pz * (1.0 - pz);
        }
        backward_batch(probe, blank.cache, d_blank, out.grads);
    }
    backward_batch(probe, base.cache, d_base, out.grads);
    out.loss.total = out.loss.bce + w.beta * out.loss.brier + w.lambda * out.loss.rank;
    return out;
}

}  // namespace groundprobe
