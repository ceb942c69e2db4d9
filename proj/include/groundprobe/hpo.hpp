#pragma once
// Random search over the probe search space with a parameter budget and a
// median pruner on per-epoch validation composites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groundprobe/detail/parallel.hpp"
#include "groundprobe/error.hpp"
#include "groundprobe/feature_store.hpp"
#include "groundprobe/metrics.hpp"
#include "groundprobe/probe.hpp"
#include "groundprobe/rng.hpp"
#include "groundprobe/train.hpp"

namespace groundprobe {

inline constexpr std::uint64_t kParameterBudget = 5'000'000;
inline constexpr std::size_t kDefaultTrials = 50;
inline constexpr std::uint64_t kProtocolSeeds[] = {23, 42, 137, 2024, 3407};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct SearchSpace {
    std::vector<Widths> layer_choices{{}, {256}, {512}, {128, 64}, {256, 128}, {512, 256}, {1024, 512}, {1024, 512, 256}};
    std::vector<double> dropout_choices{0.0, 0.1, 0.3, 0.5};
    Range learning_rate{1e-5, 1e-3};  // log-uniform
    Range weight_decay{1e-6, 1e-3};   // log-uniform
    Range beta{0.0, 0.5};
    Range lambda{0.01, 0.3};
    Range gamma{0.05, 0.25};
    bool include_loss_coeffs = true;  // false: beta = lambda = 0
    std::uint64_t budget = kParameterBudget;
};

inline void validate(const SearchSpace& s) {
    require(!s.layer_choices.empty(), ErrorKind::validation, "search space has no layer choices");
    require(!s.dropout_choices.empty(), ErrorKind::validation, "search space has no dropout choices");
    for (const auto& w : s.layer_choices) {
        for (const auto h : w) require(h > 0, ErrorKind::validation, "layer widths must be positive");
    }
    for (const double d : s.dropout_choices) require(d >= 0.0 && d < 1.0, ErrorKind::validation, "dropout must lie in [0,1)");
    auto ordered = [](const Range& r, const char* name, bool positive) {
        require(r.lo <= r.hi, ErrorKind::validation, std::string(name) + " range is reversed");
        require(!positive || r.lo > 0.0, ErrorKind::validation, std::string(name) + " range must be positive");
    };
    ordered(s.learning_rate, "learning_rate", true);
    ordered(s.weight_decay, "weight_decay", true);
    ordered(s.beta, "beta", false);
    ordered(s.lambda, "lambda", false);
    ordered(s.gamma, "gamma", true);
    require(s.beta.lo >= 0.0 && s.lambda.lo >= 0.0, ErrorKind::validation, "loss coefficients must be nonnegative");
}

inline nlohmann::json to_json(const SearchSpace& s) {
    auto range = [](const Range& r) { return nlohmann::json::array({r.lo, r.hi}); };
    return {{"layer_choices", s.layer_choices}, {"dropout_choices", s.dropout_choices},
            {"learning_rate", range(s.learning_rate)}, {"weight_decay", range(s.weight_decay)},
            {"beta", range(s.beta)}, {"lambda", range(s.lambda)}, {"gamma", range(s.gamma)},
            {"include_loss_coeffs", s.include_loss_coeffs}, {"budget", s.budget}};
}

// Keys present in `j` replace the corresponding defaults.
inline SearchSpace search_space_from_json(const nlohmann::json& j, SearchSpace s = {}) {
    require(j.is_object(), ErrorKind::format, "search space must be a JSON object");
    try {
        auto range = [&](const char* key, Range& r) {
            if (!j.contains(key)) return;
            const auto& a = j.at(key);
            require(a.is_array() && a.size() == 2, ErrorKind::format, std::string(key) + " must be [lo, hi]");
            r = {a[0].get<double>(), a[1].get<double>()};
        };
        if (j.contains("layer_choices")) s.layer_choices = j.at("layer_choices").get<std::vector<Widths>>();
        if (j.contains("dropout_choices")) s.dropout_choices = j.at("dropout_choices").get<std::vector<double>>();
        range("learning_rate", s.learning_rate);
        range("weight_decay", s.weight_decay);
        range("beta", s.beta);
        range("lambda", s.lambda);
        range("gamma", s.gamma);
        if (j.contains("include_loss_coeffs")) s.include_loss_coeffs = j.at("include_loss_coeffs").get<bool>();
        if (j.contains("budget")) s.budget = j.at("budget").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format, std::string("search space: ") + e.what());
    }
    validate(s);
    return s;
}

// ---------------------------------------------------------------------------
// Sampling

struct TrialSample {
    ProbeConfig config;
    std::uint64_t parameters = 0;
    bool within_budget = true;
};

// Draw order per trial: layers, dropout, lr, wd, beta, lambda, gamma. The
// coefficient draws happen even when include_loss_coeffs is off so both
// spaces consume the stream identically. Non-searched fields come from `base`.
inline TrialSample sample_trial(const SearchSpace& space, Rng& rng, std::uint32_t d_h, const ProbeConfig& base = {}) {
    auto log_uniform = [&](const Range& r) { return std::exp(rng.uniform(std::log(r.lo), std::log(r.hi))); };
    TrialSample out;
    out.config = base;
    out.config.hidden_widths = space.layer_choices[rng.below(space.layer_choices.size())];
    out.config.dropout = space.dropout_choices[rng.below(space.dropout_choices.size())];
    out.config.learning_rate = log_uniform(space.learning_rate);
    out.config.weight_decay = log_uniform(space.weight_decay);
    const double beta = rng.uniform(space.beta.lo, space.beta.hi);
    const double lambda = rng.uniform(space.lambda.lo, space.lambda.hi);
    const double gamma = rng.uniform(space.gamma.lo, space.gamma.hi);
    if (space.include_loss_coeffs) {
        out.config.beta = beta;
        out.config.lambda = lambda;
        out.config.gamma = gamma;
    } else {
        out.config.beta = 0.0;
        out.config.lambda = 0.0;
    }
    out.parameters = param_count(out.config.hidden_widths, d_h);
    out.within_budget = out.parameters <= space.budget;
    return out;
}

// ---------------------------------------------------------------------------
// Median pruning

struct PrunerConfig {
    std::size_t startup_trials = 5;
    std::size_t warmup_steps = 10;
    std::size_t interval = 5;
};

// `step` is 1-based (epochs). Medians use only completed trials that
// reported a value at `step`.
inline bool median_prune_decision(double value, std::span<const std::vector<double>> completed, std::size_t step,
                                  const PrunerConfig& pruner = {}) {
    if (completed.size() < pruner.startup_trials) return false;
    if (step < pruner.warmup_steps || (step - pruner.warmup_steps) % pruner.interval != 0) return false;
    std::vector<double> at_step;
    for (const auto& history : completed) {
        if (history.size() >= step) at_step.push_back(history[step - 1]);
    }
    if (at_step.empty()) return false;
    std::sort(at_step.begin(), at_step.end());
    const std::size_t m = at_step.size();
    const double median = m % 2 == 1 ? at_step[m / 2] : 0.5 * (at_step[m / 2 - 1] + at_step[m / 2]);
    return value < median;
}

// ---------------------------------------------------------------------------
// Search

enum class TrialStatus { completed, pruned, rejected_budget };

inline const char* to_string(TrialStatus s) {
    switch (s) {
        case TrialStatus::completed: return "completed";
        case TrialStatus::pruned: return "pruned";
        case TrialStatus::rejected_budget: return "rejected_budget";
    }
    return "?";
}

struct TrialRecord {
    std::size_t trial_index = 0;  // 0-based sampling order
    ProbeConfig config;
    std::uint64_t parameters = 0;
    std::optional<double> objective;  // best-epoch composite; absent when rejected
    TrialStatus status = TrialStatus::completed;
    std::vector<double> intermediate;
};

inline nlohmann::json to_json(const TrialRecord& t) {
    return {{"trial_index", t.trial_index},
            {"config", to_json(t.config)},
            {"parameters", t.parameters},
            {"objective", t.objective ? nlohmann::json(*t.objective) : nlohmann::json(nullptr)},
            {"status", to_string(t.status)},
            {"intermediate", t.intermediate}};
}

inline std::string trials_jsonl(std::span<const TrialRecord> trials) {
    std::string out;
    for (const auto& t : trials) out += to_json(t).dump() + "\n";
    return out;
}

// Trains one configuration, calling `observer` after every epoch.
using TrialTrainer = std::function<TrainResult(const ProbeConfig&, const EpochObserver& observer)>;

inline TrialTrainer make_trainer(const TrainingSet& train_set, const TrainingSet& val_set) {
    return [&train_set, &val_set](const ProbeConfig& config, const EpochObserver& observer) {
        TrainOptions options;
        options.observer = observer;
        return train(train_set, val_set, config, options);
    };
}

struct SearchOptions {
    std::size_t trials = kDefaultTrials;
    std::uint64_t seed = 23;
    SearchSpace space;
    ProbeConfig base;  // batch size, epochs, patience; seed is overwritten
    PrunerConfig pruner;
};

struct SearchResult {
    std::vector<TrialRecord> trials;
    std::size_t best_index = 0;
    Probe best_probe;

    [[nodiscard]] const TrialRecord& best() const { return trials.at(best_index); }
};

// Trials run sequentially; every trial trains with the search seed. Ties in
// objective keep the earlier trial.
inline SearchResult run_search(const TrialTrainer& trainer, std::uint32_t d_h, const SearchOptions& options) {
    validate(options.space);
    require(options.trials >= 1, ErrorKind::validation, "search needs at least one trial");
    Rng rng = Rng::substream(options.seed, streams::hpo);
    ProbeConfig base = options.base;
    base.seed = options.seed;

    SearchResult result;
    std::vector<std::vector<double>> completed;
    std::optional<double> best_objective;
    for (std::size_t t = 0; t < options.trials; ++t) {
        const TrialSample sample = sample_trial(options.space, rng, d_h, base);
        TrialRecord record;
        record.trial_index = t;
        record.config = sample.config;
        record.parameters = sample.parameters;
        if (!sample.within_budget) {
            record.status = TrialStatus::rejected_budget;
            result.trials.push_back(std::move(record));
            continue;
        }
        bool pruned = false;
        const EpochObserver observer = [&](std::size_t epoch, double composite) {
            if (median_prune_decision(composite, completed, epoch, options.pruner)) {
                pruned = true;
                return false;
            }
            return true;
        };
        TrainResult trained = trainer(sample.config, observer);
        record.intermediate = trained.history.composites();
        record.objective = trained.history.best_composite();
        record.status = pruned ? TrialStatus::pruned : TrialStatus::completed;
        if (!pruned) {
            completed.push_back(record.intermediate);
            if (!best_objective || *record.objective > *best_objective) {
                best_objective = record.objective;
                result.best_index = t;
                result.best_probe = std::move(trained.probe);
            }
        }
        result.trials.push_back(std::move(record));
    }
    require(best_objective.has_value(), ErrorKind::validation, "search finished with no completed trial");
    return result;
}

inline SearchResult run_search(const TrainingSet& train_set, const TrainingSet& val_set, const SearchOptions& options) {
    return run_search(make_trainer(train_set, val_set), static_cast<std::uint32_t>(train_set.base.cols()), options);
}

// ---------------------------------------------------------------------------
// Multi-seed protocol

struct MetricSummary {
    MetricReport mean;
    MetricReport std;  // sample standard deviation; zero for a single seed
};

inline MetricSummary summarize(std::span<const MetricReport> reports) {
    require(!reports.empty(), ErrorKind::validation, "nothing to summarize");
    const double k = static_cast<double>(reports.size());
    using Field = double MetricReport::*;
    static constexpr Field fields[] = {&MetricReport::prevalence, &MetricReport::ece,   &MetricReport::brier,
                                       &MetricReport::accuracy,   &MetricReport::f1,    &MetricReport::aucpr,
                                       &MetricReport::auroc,      &MetricReport::composite};
    MetricSummary s;
    s.mean.n = reports.front().n;
    s.std.n = reports.front().n;
    for (const Field f : fields) {
        double sum = 0.0;
        for (const auto& r : reports) sum += r.*f;
        const double mean = sum / k;
        double ss = 0.0;
        for (const auto& r : reports) ss += (r.*f - mean) * (r.*f - mean);
        s.mean.*f = mean;
        s.std.*f = reports.size() > 1 ? std::sqrt(ss / (k - 1.0)) : 0.0;
    }
    return s;
}

struct SeedOutcome {
    std::uint64_t seed = 0;
    SearchResult search;
    std::vector<double> test_confidences;
    MetricReport test;
};

struct ProtocolResult {
    std::vector<SeedOutcome> seeds;
    MetricSummary summary;
};

inline ProtocolResult multi_seed_protocol(const TrainingSet& train_set, const TrainingSet& val_set,
                                          const TrainingSet& test_set, const SearchOptions& options,
                                          std::span<const std::uint64_t> seeds = kProtocolSeeds, std::size_t jobs = 1) {
    require(!seeds.empty(), ErrorKind::validation, "protocol needs at least one seed");
    ProtocolResult result;
    result.seeds.resize(seeds.size());
    detail::parallel_for(seeds.size(), jobs, [&](std::size_t i) {
        SearchOptions local = options;
        local.seed = seeds[i];
        auto& out = result.seeds[i];
        out.seed = seeds[i];
        out.search = run_search(train_set, val_set, local);
        out.test_confidences = predict(out.search.best_probe, test_set.base);
        out.test = evaluate(out.test_confidences, test_set.y);
    });
    std::vector<MetricReport> reports;
    for (const auto& s : result.seeds) reports.push_back(s.test);
    result.summary = summarize(reports);
    return result;
}

}  // namespace groundprobe
