#pragma once
// Paired significance tests and resampling intervals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groundprobe/error.hpp"
#include "groundprobe/feature_store.hpp"
#include "groundprobe/metrics.hpp"
#include "groundprobe/rng.hpp"

namespace groundprobe {

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank, two-sided

inline constexpr std::size_t kWilcoxonExactMax = 25;

struct WilcoxonResult {
    double p_value = 1.0;
    double w_plus = 0.0;          // sum of ranks of positive differences
    std::size_t n_effective = 0;  // after dropping zeros
    bool exact = true;
    bool all_zero = false;        // every delta was zero; p set to 1 by convention
};

namespace detail {

// Average ranks of |x|, 1-based.
inline std::vector<double> abs_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(x[a]) < std::abs(x[b]); });
    std::vector<double> ranks(n);
    for (std::size_t start = 0; start < n;) {
        std::size_t end = start;
        while (end < n && std::abs(x[order[end]]) == std::abs(x[order[start]])) ++end;
        const double avg = 0.5 * static_cast<double>(start + 1 + end);
        for (std::size_t k = start; k < end; ++k) ranks[order[k]] = avg;
        start = end;
    }
    return ranks;
}

inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> deltas) {
    require(!deltas.empty(), ErrorKind::validation, "wilcoxon: need at least one paired difference");
    std::vector<double> nonzero;
    for (const double d : deltas) {
        require(std::isfinite(d), ErrorKind::validation, "wilcoxon: non-finite difference");
        if (d != 0.0) nonzero.push_back(d);
    }
    WilcoxonResult out;
    out.n_effective = nonzero.size();
    if (nonzero.empty()) {
        out.all_zero = true;
        out.p_value = 1.0;
        return out;
    }
    const auto ranks = detail::abs_ranks(nonzero);
    const std::size_t n = nonzero.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (nonzero[i] > 0.0) out.w_plus += ranks[i];
    }

    if (n <= kWilcoxonExactMax) {
        // Null distribution of 2 * W+ over all 2^n sign assignments; doubled
        // ranks are integers even with ties.
        std::vector<int> doubled(n);
        int total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
            total += doubled[i];
        }
        std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
        ways[0] = 1.0;
        int reach = 0;
        for (const int r : doubled) {
            for (int s = reach; s >= 0; --s) {
                if (ways[static_cast<std::size_t>(s)] != 0.0) ways[static_cast<std::size_t>(s + r)] += ways[static_cast<std::size_t>(s)];
            }
            reach += r;
        }
        const int observed = static_cast<int>(std::lround(2.0 * out.w_plus));
        double lower = 0.0, upper = 0.0;
        for (int s = 0; s <= total; ++s) {
            if (s <= observed) lower += ways[static_cast<std::size_t>(s)];
            if (s >= observed) upper += ways[static_cast<std::size_t>(s)];
        }
        const double all = std::ldexp(1.0, static_cast<int>(n));
        out.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
        out.exact = true;
        return out;
    }

    // Normal approximation with tie correction, no continuity correction.
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    double tie_term = 0.0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t start = 0; start < n;) {
        std::size_t end = start;
        while (end < n && sorted[end] == sorted[start]) ++end;
        const double t = static_cast<double>(end - start);
        tie_term += t * t * t - t;
        start = end;
    }
    const double variance = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = (out.w_plus - mean) / std::sqrt(variance);
    out.p_value = std::min(1.0, 2.0 * detail::normal_upper_tail(std::abs(z)));
    out.exact = false;
    return out;
}

// ---------------------------------------------------------------------------
// Paired bootstrap of the Brier-score difference

struct BootstrapResult {
    double mean_delta = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t resamples = 0;
    std::uint64_t seed = 0;
};

namespace detail {
// Nearest-rank percentile q = num / den of an ascending sample.
inline double nearest_rank(const std::vector<double>& sorted, std::size_t num, std::size_t den) {
    const std::size_t n = sorted.size();
    std::size_t rank = (num * n + den - 1) / den;  // ceil(q n)
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
}
}  // namespace detail

// Resample b draws n indices from substream (seed, b) and records
// mean((a - y)^2) - mean((b - y)^2). Reports the mean over resamples and the
// nearest-rank 2.5 / 97.5 percentiles.
inline BootstrapResult paired_bootstrap_bs_delta(std::span<const double> conf_a, std::span<const double> conf_b,
                                                 std::span<const int> labels, std::size_t resamples = 2000,
                                                 std::uint64_t seed = 23) {
    detail::check_scores(conf_a, labels, "paired_bootstrap_bs_delta");
    detail::check_scores(conf_b, labels, "paired_bootstrap_bs_delta");
    require(resamples >= 1, ErrorKind::validation, "paired_bootstrap_bs_delta: need at least one resample");
    const std::size_t n = labels.size();
    std::vector<double> sq_a(n), sq_b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double y = labels[i];
        sq_a[i] = (conf_a[i] - y) * (conf_a[i] - y);
        sq_b[i] = (conf_b[i] - y) * (conf_b[i] - y);
    }
    std::vector<double> deltas(resamples);
    for (std::size_t r = 0; r < resamples; ++r) {
        Rng rng = Rng::substream(seed, streams::bootstrap, r);
        double sum_a = 0.0, sum_b = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const auto i = static_cast<std::size_t>(rng.below(n));
            sum_a += sq_a[i];
            sum_b += sq_b[i];
        }
        deltas[r] = sum_a / static_cast<double>(n) - sum_b / static_cast<double>(n);
    }
    BootstrapResult out;
    out.resamples = resamples;
    out.seed = seed;
    out.mean_delta = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(resamples);
    std::sort(deltas.begin(), deltas.end());
    out.ci_low = detail::nearest_rank(deltas, 25, 1000);
    out.ci_high = detail::nearest_rank(deltas, 975, 1000);
    return out;
}

// ---------------------------------------------------------------------------
// Cluster bootstrap over per-cluster mean deltas, two-sided

struct ClusterBootstrapResult {
    double p_value = 1.0;
    double mean_delta = 0.0;  // mean of the observed cluster deltas
    std::size_t resamples = 0;
};

inline ClusterBootstrapResult cluster_bootstrap(std::span<const double> cluster_deltas, std::size_t resamples = 10000,
                                                std::uint64_t seed = 23) {
    const std::size_t k = cluster_deltas.size();
    require(k >= 2, ErrorKind::validation, "cluster_bootstrap needs at least two clusters");
    require(resamples >= 1, ErrorKind::validation, "cluster_bootstrap needs at least one resample");
    for (const double d : cluster_deltas) require(std::isfinite(d), ErrorKind::validation, "cluster_bootstrap: non-finite delta");
    std::size_t at_most_zero = 0, at_least_zero = 0;
    for (std::size_t r = 0; r < resamples; ++r) {
        Rng rng = Rng::substream(seed, streams::cluster_bootstrap, r);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += cluster_deltas[static_cast<std::size_t>(rng.below(k))];
        const double mean = sum / static_cast<double>(k);
        if (mean <= 0.0) ++at_most_zero;
        if (mean >= 0.0) ++at_least_zero;
    }
    const double R = static_cast<double>(resamples);
    const double two_sided = 2.0 * std::min(static_cast<double>(at_most_zero), static_cast<double>(at_least_zero)) / R;
    ClusterBootstrapResult out;
    out.resamples = resamples;
    out.mean_delta = std::accumulate(cluster_deltas.begin(), cluster_deltas.end(), 0.0) / static_cast<double>(k);
    out.p_value = std::clamp(two_sided, 1.0 / (R + 1.0), 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// Holm-Bonferroni step-down adjustment

inline std::vector<double> holm_bonferroni(std::span<const double> p_values) {
    const std::size_t m = p_values.size();
    for (const double p : p_values) require(p >= 0.0 && p <= 1.0, ErrorKind::validation, "holm: p-values must lie in [0,1]");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    std::vector<double> adjusted(m);
    double running = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double scaled = std::min(1.0, static_cast<double>(m - i) * p_values[order[i]]);
        running = std::max(running, scaled);
        adjusted[order[i]] = running;
    }
    return adjusted;
}

// ---------------------------------------------------------------------------
// Subset analysis driven by manifest diagnostics

// A scored sample with its manifest identity.
struct ScoredSample {
    std::string hash_id_hex;
    double confidence = 0.0;
    int label = 0;
};

struct SubsetPredicate {
    std::string description;
    std::function<bool(const ManifestEntry&, int label)> test;
};

inline SubsetPredicate all_samples() {
    return {"all", [](const ManifestEntry&, int) { return true; }};
}

inline SubsetPredicate image_invariant() {
    return {"flip_swap=0", [](const ManifestEntry& e, int) { return e.flip_swap && *e.flip_swap == 0; }};
}

// Image-invariant, incorrect, and confidently answered by the model.
inline SubsetPredicate failure_subset(double top1_threshold = 0.8) {
    return {"flip_swap=0,label=0,top1_prob>" + detail::fmt_real(top1_threshold), [top1_threshold](const ManifestEntry& e, int label) {
                return e.flip_swap && *e.flip_swap == 0 && label == 0 && e.top1_prob && *e.top1_prob > top1_threshold;
            }};
}

// Comma-separated clauses `field op value`, all of which must hold.
// Fields: flip_swap, dp_swap, top1_prob, label, dataset, category.
// Ops: = != < <= > >=. A clause on an unmeasured field is false.
inline SubsetPredicate parse_subset(const std::string& expression) {
    struct Clause {
        std::string field, op, value;
    };
    std::vector<Clause> clauses;
    std::size_t start = 0;
    while (start <= expression.size()) {
        const auto end = std::min(expression.find(',', start), expression.size());
        const std::string text = expression.substr(start, end - start);
        const auto pos = text.find_first_of("=!<>");
        require(pos != std::string::npos && pos > 0, ErrorKind::validation, "bad subset clause '" + text + "'");
        std::size_t op_len = 1;
        if (pos + 1 < text.size() && text[pos + 1] == '=') op_len = 2;
        Clause c{text.substr(0, pos), text.substr(pos, op_len), text.substr(pos + op_len)};
        require(c.op != "!", ErrorKind::validation, "bad subset operator in '" + text + "'");
        static const std::vector<std::string> fields{"flip_swap", "dp_swap", "top1_prob", "label", "dataset", "category"};
        require(std::find(fields.begin(), fields.end(), c.field) != fields.end(), ErrorKind::validation,
                "unknown subset field '" + c.field + "'");
        const bool textual = c.field == "dataset" || c.field == "category";
        require(!textual || c.op == "=" || c.op == "!=", ErrorKind::validation,
                "field '" + c.field + "' supports only = and !=");
        if (!textual) {
            try {
                (void)std::stod(c.value);
            } catch (const std::exception&) {
                fail(ErrorKind::validation, "subset value '" + c.value + "' is not a number");
            }
        }
        clauses.push_back(std::move(c));
        if (end == expression.size()) break;
        start = end + 1;
    }
    auto compare = [](double lhs, const std::string& op, double rhs) {
        if (op == "=") return lhs == rhs;
        if (op == "!=") return lhs != rhs;
        if (op == "<") return lhs < rhs;
        if (op == "<=") return lhs <= rhs;
        if (op == ">") return lhs > rhs;
        return lhs >= rhs;
    };
    return {expression, [clauses, compare](const ManifestEntry& e, int label) {
                for (const auto& c : clauses) {
                    if (c.field == "dataset" || c.field == "category") {
                        const auto& actual = c.field == "dataset" ? e.dataset : e.category;
                        if ((actual == c.value) != (c.op == "=")) return false;
                        continue;
                    }
                    std::optional<double> actual;
                    if (c.field == "flip_swap" && e.flip_swap) actual = *e.flip_swap;
                    if (c.field == "dp_swap") actual = e.dp_swap;
                    if (c.field == "top1_prob") actual = e.top1_prob;
                    if (c.field == "label") actual = label;
                    if (!actual || !compare(*actual, c.op, std::stod(c.value))) return false;
                }
                return true;
            }};
}

struct SubsetSelection {
    std::vector<double> confidences;
    std::vector<int> labels;
};

inline SubsetSelection select_subset(std::span<const ScoredSample> samples, const Manifest& manifest,
                                     const SubsetPredicate& predicate) {
    SubsetSelection out;
    for (const auto& s : samples) {
        const auto* entry = manifest.find(s.hash_id_hex);
        require(entry != nullptr, ErrorKind::validation, "no manifest entry for " + s.hash_id_hex);
        if (predicate.test(*entry, s.label)) {
            out.confidences.push_back(s.confidence);
            out.labels.push_back(s.label);
        }
    }
    return out;
}

inline MetricReport subset_metrics(std::span<const ScoredSample> samples, const Manifest& manifest,
                                   const SubsetPredicate& predicate, std::size_t bins = kDefaultBins) {
    const auto subset = select_subset(samples, manifest, predicate);
    if (subset.confidences.empty()) {
        fail(ErrorKind::undefined_metric, "subset '" + predicate.description + "' selects no samples");
    }
    return evaluate(subset.confidences, subset.labels, bins);
}

// ---------------------------------------------------------------------------
// Aggregation across datasets

enum class AggregationMode { pooled, equal_weight };

inline constexpr std::size_t kMinDatasetSize = 100;

struct DatasetScores {
    std::string name;
    std::vector<double> confidences;
    std::vector<int> labels;
};

// pooled: metrics over the concatenation of every dataset.
// equal_weight: arithmetic mean of per-dataset metrics over datasets with at
// least 100 samples.
inline MetricReport aggregate(std::span<const DatasetScores> datasets, AggregationMode mode,
                              std::size_t bins = kDefaultBins) {
    if (mode == AggregationMode::pooled) {
        DatasetScores all;
        for (const auto& d : datasets) {
            all.confidences.insert(all.confidences.end(), d.confidences.begin(), d.confidences.end());
            all.labels.insert(all.labels.end(), d.labels.begin(), d.labels.end());
        }
        return evaluate(all.confidences, all.labels, bins);
    }
    MetricReport mean;
    std::size_t used = 0;
    for (const auto& d : datasets) {
        if (d.confidences.size() < kMinDatasetSize) continue;
        const auto r = evaluate(d.confidences, d.labels, bins);
        mean.n += r.n;
        mean.prevalence += r.prevalence;
        mean.ece += r.ece;
        mean.brier += r.brier;
        mean.accuracy += r.accuracy;
        mean.f1 += r.f1;
        mean.aucpr += r.aucpr;
        mean.auroc += r.auroc;
        ++used;
    }
    require(used > 0, ErrorKind::undefined_metric,
            "equal-weight aggregation: no dataset has at least " + std::to_string(kMinDatasetSize) + " samples");
    const double k = static_cast<double>(used);
    mean.prevalence /= k;
    mean.ece /= k;
    mean.brier /= k;
    mean.accuracy /= k;
    mean.f1 /= k;
    mean.aucpr /= k;
    mean.auroc /= k;
    mean.composite = composite(mean.auroc, mean.ece);
    return mean;
}

// ---------------------------------------------------------------------------
// Report serialization

struct StatsReport {
    std::string comparison;
    std::string metric;
    double mean_delta = 0.0;
    std::optional<double> ci_low;
    std::optional<double> ci_high;
    std::optional<double> p_raw;
    std::optional<double> p_holm;
    std::size_t n = 0;
    std::string mode;
};

inline nlohmann::json to_json(const StatsReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"comparison", r.comparison}, {"metric", r.metric},   {"mean_delta", r.mean_delta},
            {"ci_low", opt(r.ci_low)},    {"ci_high", opt(r.ci_high)}, {"p_raw", opt(r.p_raw)},
            {"p_holm", opt(r.p_holm)},    {"n", r.n},             {"mode", r.mode}};
}

}  // namespace groundprobe
