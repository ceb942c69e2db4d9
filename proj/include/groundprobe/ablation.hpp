#pragma once
// Loss-component ablation: full, no_brier, no_rank and bce_only variants
// trained on identical data and seeds, compared against the full variant.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "groundprobe/detail/parallel.hpp"
#include "groundprobe/error.hpp"
#include "groundprobe/feature_store.hpp"
#include "groundprobe/hpo.hpp"
#include "groundprobe/metrics.hpp"
#include "groundprobe/stats.hpp"
#include "groundprobe/train.hpp"

namespace groundprobe {

enum class Variant { full, no_brier, no_rank, bce_only };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_brier: return "no_brier";
        case Variant::no_rank: return "no_rank";
        case Variant::bce_only: return "bce_only";
    }
    return "?";
}

inline Variant variant_from_string(std::string_view name) {
    if (name == "full") return Variant::full;
    if (name == "no_brier") return Variant::no_brier;
    if (name == "no_rank") return Variant::no_rank;
    if (name == "bce_only") return Variant::bce_only;
    fail(ErrorKind::validation, "unknown ablation variant '" + std::string(name) + "'");
}

inline std::vector<Variant> all_variants() { return {Variant::full, Variant::no_brier, Variant::no_rank, Variant::bce_only}; }

// Zeroes the coefficients the variant removes; everything else is kept.
inline ProbeConfig apply_variant(ProbeConfig config, Variant v) {
    if (v == Variant::no_brier || v == Variant::bce_only) config.beta = 0.0;
    if (v == Variant::no_rank || v == Variant::bce_only) config.lambda = 0.0;
    return config;
}

// ---------------------------------------------------------------------------
// Confidence distribution

struct ConfidenceDistribution {
    double mean_correct = 0.0;
    double mean_incorrect = 0.0;
    double separation = 0.0;  // mean_correct - mean_incorrect
    double frac_above_half = 0.0;
    double frac_below_tenth = 0.0;
};

inline ConfidenceDistribution confidence_distribution(std::span<const double> conf, std::span<const int> labels) {
    detail::check_scores(conf, labels, "confidence_distribution");
    double sum_c = 0.0, sum_i = 0.0;
    std::size_t n_c = 0, n_i = 0, above = 0, below = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
        if (labels[i] == 1) {
            sum_c += conf[i];
            ++n_c;
        } else {
            sum_i += conf[i];
            ++n_i;
        }
        if (conf[i] > 0.5) ++above;
        if (conf[i] < 0.1) ++below;
    }
    require(n_c > 0 && n_i > 0, ErrorKind::undefined_metric,
            "confidence_distribution needs both correct and incorrect samples for conditional means");
    ConfidenceDistribution d;
    d.mean_correct = sum_c / static_cast<double>(n_c);
    d.mean_incorrect = sum_i / static_cast<double>(n_i);
    d.separation = d.mean_correct - d.mean_incorrect;
    const auto n = static_cast<double>(conf.size());
    d.frac_above_half = static_cast<double>(above) / n;
    d.frac_below_tenth = static_cast<double>(below) / n;
    return d;
}

// ---------------------------------------------------------------------------
// Deltas

struct MetricDeltas {
    double ece = 0.0;
    double brier = 0.0;
    double aucpr = 0.0;
    double auroc = 0.0;
};

// to - from, per metric.
inline MetricDeltas metric_deltas(const MetricReport& from, const MetricReport& to) {
    return {to.ece - from.ece, to.brier - from.brier, to.aucpr - from.aucpr, to.auroc - from.auroc};
}

// ---------------------------------------------------------------------------
// Runs

enum class AblationMode { fast, search };

struct AblationData {
    TrainingSet train;
    TrainingSet val;
    TrainingSet test;
    std::vector<std::string> test_ids;  // hash_id_hex per test row, for manifest lookups
    std::optional<Manifest> manifest;
};

inline AblationData make_ablation_data(std::span<const PairedSample> train, std::span<const PairedSample> val,
                                       std::span<const PairedSample> test, std::optional<Manifest> manifest = {}) {
    AblationData data;
    data.train = make_training_set(train, "training");
    data.val = make_training_set(val, "validation");
    data.test = make_training_set(test, "test");
    data.test_ids.reserve(test.size());
    for (const auto& s : test) data.test_ids.push_back(to_hex(s.hash_id));
    data.manifest = std::move(manifest);
    return data;
}

struct AblationOptions {
    std::vector<Variant> variants = all_variants();
    std::vector<std::uint64_t> seeds{std::begin(kProtocolSeeds), std::end(kProtocolSeeds)};
    AblationMode mode = AblationMode::fast;
    ProbeConfig base;          // fast mode: trained as-is (variant-zeroed); search mode: fixed fields
    SearchOptions search;      // search mode only; seed overwritten per run
    std::size_t bins = kDefaultBins;
    std::size_t jobs = 1;
    std::size_t cluster_resamples = 10000;
};

struct AblationRun {
    Variant variant = Variant::full;
    std::uint64_t seed = 0;
    ProbeConfig config;  // the configuration actually trained
    TrainHistory history;
    std::vector<double> test_confidences;
    MetricReport test;
    std::optional<double> ungrounded_mean_confidence;  // mean over flip_swap = 0 test samples
    Probe probe;
};

struct VariantSummary {
    Variant variant = Variant::full;
    MetricSummary metrics;        // across seeds
    MetricDeltas delta;           // mean(variant) - mean(full)
    ReliabilityBins pooled_bins;  // all seeds' test scores pooled
    ConfidenceDistribution distribution;  // pooled
};

struct AblationResult {
    std::vector<AblationRun> runs;  // variant-major, seeds in option order
    std::vector<VariantSummary> variants;
    std::vector<StatsReport> significance;

    [[nodiscard]] const AblationRun& run(Variant v, std::uint64_t seed) const {
        for (const auto& r : runs) {
            if (r.variant == v && r.seed == seed) return r;
        }
        fail(ErrorKind::validation, std::string("no ablation run for ") + to_string(v) + " seed " + std::to_string(seed));
    }
};

namespace detail {

inline std::optional<double> ungrounded_mean(const AblationData& data, std::span<const double> conf) {
    if (!data.manifest) return std::nullopt;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
        const auto* e = data.manifest->find(data.test_ids.at(i));
        if (e && e->flip_swap && *e->flip_swap == 0) {
            sum += conf[i];
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

inline AblationRun run_variant(const AblationData& data, const AblationOptions& options, Variant v, std::uint64_t seed) {
    AblationRun run;
    run.variant = v;
    run.seed = seed;
    if (options.mode == AblationMode::fast) {
        run.config = apply_variant(options.base, v);
        run.config.seed = seed;
        TrainResult trained = train(data.train, data.val, run.config);
        run.history = std::move(trained.history);
        run.probe = std::move(trained.probe);
    } else {
        SearchOptions search = options.search;
        search.seed = seed;
        search.base = options.base;
        if (v == Variant::bce_only) search.space.include_loss_coeffs = false;
        const TrialTrainer inner = make_trainer(data.train, data.val);
        const TrialTrainer trainer = [&](const ProbeConfig& sampled, const EpochObserver& observer) {
            return inner(apply_variant(sampled, v), observer);
        };
        SearchResult found = run_search(trainer, static_cast<std::uint32_t>(data.train.base.cols()), search);
        run.config = apply_variant(found.best().config, v);
        run.probe = std::move(found.best_probe);
    }
    run.test_confidences = predict(run.probe, data.test.base);
    run.test = evaluate(run.test_confidences, data.test.y, options.bins);
    run.ungrounded_mean_confidence = ungrounded_mean(data, run.test_confidences);
    return run;
}

}  // namespace detail

inline AblationResult run_ablation(const AblationData& data, const AblationOptions& options) {
    require(!options.variants.empty(), ErrorKind::validation, "ablation needs at least one variant");
    require(!options.seeds.empty(), ErrorKind::validation, "ablation needs at least one seed");
    require(std::find(options.variants.begin(), options.variants.end(), Variant::full) != options.variants.end(),
            ErrorKind::validation, "ablation deltas are relative to the full variant, which must be included");
    const std::size_t n_seeds = options.seeds.size();
    AblationResult result;
    result.runs.resize(options.variants.size() * n_seeds);
    detail::parallel_for(result.runs.size(), options.jobs, [&](std::size_t i) {
        result.runs[i] = detail::run_variant(data, options, options.variants[i / n_seeds], options.seeds[i % n_seeds]);
    });

    std::vector<MetricReport> full_reports;
    for (const auto& r : result.runs) {
        if (r.variant == Variant::full) full_reports.push_back(r.test);
    }
    const MetricSummary full = summarize(full_reports);

    for (std::size_t vi = 0; vi < options.variants.size(); ++vi) {
        const Variant v = options.variants[vi];
        VariantSummary s;
        s.variant = v;
        std::vector<MetricReport> reports;
        std::vector<double> pooled_conf;
        std::vector<int> pooled_y;
        for (std::size_t k = 0; k < n_seeds; ++k) {
            const auto& r = result.runs[vi * n_seeds + k];
            reports.push_back(r.test);
            pooled_conf.insert(pooled_conf.end(), r.test_confidences.begin(), r.test_confidences.end());
            pooled_y.insert(pooled_y.end(), data.test.y.begin(), data.test.y.end());
        }
        s.metrics = summarize(reports);
        s.delta = metric_deltas(full.mean, s.metrics.mean);
        s.pooled_bins = reliability_bins(pooled_conf, pooled_y, options.bins);
        s.distribution = confidence_distribution(pooled_conf, pooled_y);
        result.variants.push_back(s);

        if (v == Variant::full) continue;
        // Per-seed deltas (variant - full); each seed is one cluster.
        using Field = double MetricDeltas::*;
        const std::pair<const char*, Field> metrics[] = {
            {"ece", &MetricDeltas::ece}, {"brier", &MetricDeltas::brier},
            {"aucpr", &MetricDeltas::aucpr}, {"auroc", &MetricDeltas::auroc}};
        std::vector<StatsReport> family;
        for (const auto& [name, field] : metrics) {
            std::vector<double> deltas;
            for (std::size_t k = 0; k < n_seeds; ++k) {
                deltas.push_back(metric_deltas(result.run(Variant::full, options.seeds[k]).test,
                                               result.runs[vi * n_seeds + k].test).*field);
            }
            StatsReport rep;
            rep.comparison = std::string(to_string(v)) + "-full";
            rep.metric = name;
            rep.n = n_seeds;
            rep.mode = "wilcoxon";
            rep.mean_delta = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(n_seeds);
            rep.p_raw = wilcoxon_signed_rank(deltas).p_value;
            family.push_back(rep);
            if (n_seeds >= 2) {
                StatsReport cl = rep;
                cl.mode = "cluster_bootstrap";
                cl.p_raw = cluster_bootstrap(deltas, options.cluster_resamples, 23).p_value;
                family.push_back(cl);
            }
        }
        // Holm within each test type across the four metrics.
        for (const char* mode : {"wilcoxon", "cluster_bootstrap"}) {
            std::vector<double> ps;
            std::vector<std::size_t> where;
            for (std::size_t i = 0; i < family.size(); ++i) {
                if (family[i].mode == mode) {
                    ps.push_back(*family[i].p_raw);
                    where.push_back(i);
                }
            }
            const auto adjusted = holm_bonferroni(ps);
            for (std::size_t i = 0; i < where.size(); ++i) family[where[i]].p_holm = adjusted[i];
        }
        result.significance.insert(result.significance.end(), family.begin(), family.end());
    }
    return result;
}

// ---------------------------------------------------------------------------
// Tables

inline constexpr const char* kDeltaCsvHeader = "variant,ECE,ΔECE,BS,ΔBS,AUCPR,ΔAUCPR,AUROC,ΔAUROC";

inline std::string delta_csv(std::span<const VariantSummary> variants) {
    using detail::fmt_real;
    std::string out = std::string(kDeltaCsvHeader) + "\n";
    for (const auto& v : variants) {
        const auto& m = v.metrics.mean;
        out += std::string(to_string(v.variant)) + "," + fmt_real(m.ece) + "," + fmt_real(v.delta.ece) + "," +
               fmt_real(m.brier) + "," + fmt_real(v.delta.brier) + "," + fmt_real(m.aucpr) + "," +
               fmt_real(v.delta.aucpr) + "," + fmt_real(m.auroc) + "," + fmt_real(v.delta.auroc) + "\n";
    }
    return out;
}

inline constexpr const char* kRunsCsvHeader =
    "variant,seed,n,prevalence,ece,brier,acc,f1,aucpr,auroc,composite,ungrounded_mean_conf";

inline std::string runs_csv(std::span<const AblationRun> runs) {
    std::string out = std::string(kRunsCsvHeader) + "\n";
    for (const auto& r : runs) {
        out += std::string(to_string(r.variant)) + "," + std::to_string(r.seed) + "," + report_csv_row(r.test) + "," +
               (r.ungrounded_mean_confidence ? detail::fmt_real(*r.ungrounded_mean_confidence) : std::string()) + "\n";
    }
    return out;
}

}  // namespace groundprobe
