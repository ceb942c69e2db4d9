#pragma once
// Minibatch training with per-epoch validation and composite-score early
// stopping.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groundprobe/error.hpp"
#include "groundprobe/feature_store.hpp"
#include "groundprobe/loss.hpp"
#include "groundprobe/metrics.hpp"
#include "groundprobe/optim.hpp"
#include "groundprobe/probe.hpp"
#include "groundprobe/rng.hpp"

namespace groundprobe {

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    LossBreakdown train_loss;  // sample-weighted mean over the epoch's batches
    double val_composite = 0.0;
    double val_ece = 0.0;
    double val_auroc = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    std::size_t stopped_epoch = 0;
    bool early_stopped = false;  // patience exhausted
    bool interrupted = false;    // observer asked to stop (pruning)

    [[nodiscard]] double best_composite() const { return epochs.at(best_epoch - 1).val_composite; }

    [[nodiscard]] std::vector<double> composites() const {
        std::vector<double> out;
        out.reserve(epochs.size());
        for (const auto& e : epochs) out.push_back(e.val_composite);
        return out;
    }
};

inline nlohmann::json to_json(const TrainHistory& h) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : h.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"loss_bce", e.train_loss.bce},
                          {"loss_brier", e.train_loss.brier},
                          {"loss_rank", e.train_loss.rank},
                          {"loss_total", e.train_loss.total},
                          {"val_composite", e.val_composite},
                          {"val_ece", e.val_ece},
                          {"val_auroc", e.val_auroc}});
    }
    return {{"best_epoch", h.best_epoch},
            {"stopped_epoch", h.stopped_epoch},
            {"early_stopped", h.early_stopped},
            {"interrupted", h.interrupted},
            {"epochs", epochs}};
}

struct ValidationScore {
    double composite = 0.0;
    double ece = 0.0;
    double auroc = 0.0;
};

// Replaces the built-in validation (used to script score landscapes).
using ValidationHook = std::function<ValidationScore(const Probe&, std::size_t epoch)>;
// Called after each validation; returning false stops training early.
using EpochObserver = std::function<bool(std::size_t epoch, double composite)>;

struct TrainOptions {
    ValidationHook validation;
    EpochObserver observer;
};

struct TrainResult {
    Probe probe;  // parameters from the best epoch
    TrainHistory history;
};

// Training tensors built once from paired samples (features widened to f64).
struct TrainingSet {
    Matrix base;
    Matrix blank;  // empty when the samples carry no blank view
    std::vector<int> y;
    ClassCounts counts;

    [[nodiscard]] std::size_t size() const { return y.size(); }
    [[nodiscard]] bool has_blank() const { return blank.rows() == base.rows() && base.rows() > 0; }
};

inline TrainingSet make_training_set(std::span<const PairedSample> samples, const char* what) {
    require(!samples.empty(), ErrorKind::validation, std::string(what) + " set is empty");
    const std::size_t d = samples.front().h_base.size();
    require(d >= 1, ErrorKind::validation, std::string(what) + " set has zero-dimensional features");
    TrainingSet set;
    set.counts = class_counts(samples);
    set.y.reserve(samples.size());
    for (const auto& s : samples) set.y.push_back(label_value(s.y));
    set.base.resize(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(d));
    const bool paired = std::all_of(samples.begin(), samples.end(), [&](const PairedSample& s) { return s.h_blank.size() == d; });
    if (paired) set.blank.resize(set.base.rows(), set.base.cols());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        require(samples[i].h_base.size() == d, ErrorKind::validation, std::string(what) + " set mixes dimensions");
        const auto r = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < d; ++j) {
            set.base(r, static_cast<Eigen::Index>(j)) = samples[i].h_base[j];
            if (paired) set.blank(r, static_cast<Eigen::Index>(j)) = samples[i].h_blank[j];
        }
    }
    return set;
}

inline ValidationScore validate_probe(const Probe& probe, const TrainingSet& val) {
    const auto conf = predict(probe, val.base);
    ValidationScore s;
    s.auroc = auroc(conf, val.y);
    s.ece = ece(conf, val.y);
    s.composite = composite(s.auroc, s.ece);
    return s;
}

// w_plus = n_minus / n_plus from the training split.
inline double positive_weight(const ClassCounts& counts) {
    require(counts.n_plus > 0, ErrorKind::validation, "training split has no correct samples; w_plus undefined");
    require(counts.n_minus > 0, ErrorKind::validation, "training split has no incorrect samples; w_plus would be 0");
    return static_cast<double>(counts.n_minus) / static_cast<double>(counts.n_plus);
}

inline TrainResult train(const TrainingSet& train_set, const TrainingSet& val_set, const ProbeConfig& config,
                         const TrainOptions& options = {}) {
    validate(config);
    require(train_set.size() > 0, ErrorKind::validation, "empty training set");
    require(val_set.size() > 0, ErrorKind::validation, "empty validation set");
    if (!options.validation) {
        const auto positives = std::count(val_set.y.begin(), val_set.y.end(), 1);
        require(positives > 0 && positives < static_cast<std::ptrdiff_t>(val_set.size()), ErrorKind::undefined_metric,
                "validation set has a single class; AUROC is undefined");
    }
    if (config.lambda != 0.0) {
        require(train_set.has_blank(), ErrorKind::validation,
                "rank weight lambda > 0 needs paired base/blank input for every training sample");
    }

    const auto d_h = static_cast<std::uint32_t>(train_set.base.cols());
    const LossWeights weights{positive_weight(train_set.counts), config.beta, config.lambda, config.gamma};
    Probe probe = init_probe(config, d_h);
    AdamState adam = AdamState::for_probe(probe);
    Rng shuffle_rng = Rng::substream(config.seed, streams::shuffle);
    Rng dropout_rng = Rng::substream(config.seed, streams::dropout);

    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    std::optional<Probe> best;
    double best_score = -std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    Batch batch;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        LossBreakdown sums;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t m = std::min(config.batch_size, n - start);
            batch.base.resize(static_cast<Eigen::Index>(m), train_set.base.cols());
            if (config.lambda != 0.0) batch.blank.resize(static_cast<Eigen::Index>(m), train_set.base.cols());
            batch.y.resize(m);
            for (std::size_t k = 0; k < m; ++k) {
                const auto src = static_cast<Eigen::Index>(order[start + k]);
                batch.base.row(static_cast<Eigen::Index>(k)) = train_set.base.row(src);
                if (config.lambda != 0.0) batch.blank.row(static_cast<Eigen::Index>(k)) = train_set.blank.row(src);
                batch.y[k] = train_set.y[static_cast<std::size_t>(src)];
            }
            const auto step = gradients(batch, probe, weights, Mode::train, &dropout_rng);
            adam_step(probe, adam, step.grads, config.learning_rate, config.weight_decay);
            const auto w = static_cast<double>(m);
            sums.bce += w * step.loss.bce;
            sums.brier += w * step.loss.brier;
            sums.rank += w * step.loss.rank;
            sums.total += w * step.loss.total;
        }

        EpochRecord record;
        record.epoch = epoch;
        const auto inv = 1.0 / static_cast<double>(n);
        record.train_loss = {sums.bce * inv, sums.brier * inv, sums.rank * inv, sums.total * inv};
        const ValidationScore score = options.validation ? options.validation(probe, epoch) : validate_probe(probe, val_set);
        record.val_composite = score.composite;
        record.val_ece = score.ece;
        record.val_auroc = score.auroc;
        result.history.epochs.push_back(record);
        result.history.stopped_epoch = epoch;

        if (score.composite > best_score) {
            best_score = score.composite;
            best = probe;
            result.history.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (options.observer && !options.observer(epoch, score.composite)) {
            result.history.interrupted = true;
            break;
        }
        if (since_best >= config.patience) {
            result.history.early_stopped = true;
            break;
        }
    }
    require(best.has_value(), ErrorKind::validation, "training produced no finite validation score");
    result.probe = std::move(*best);
    return result;
}

inline TrainResult train(std::span<const PairedSample> train_samples, std::span<const PairedSample> val_samples,
                         const ProbeConfig& config, const TrainOptions& options = {}) {
    return train(make_training_set(train_samples, "training"), make_training_set(val_samples, "validation"), config,
                 options);
}

}  // namespace groundprobe
