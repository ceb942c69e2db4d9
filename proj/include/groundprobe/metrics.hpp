#pragma once
// Calibration and discrimination metrics over binary correctness labels.
//
// Conventions:
//   bins       b equal-width bins; bin j = [j/b, (j+1)/b), the last bin is closed
//   auroc      Mann-Whitney with ties worth one half
//   aucpr      step-wise average precision, tied scores processed as one block
//   threshold  predict correct when confidence >= 0.5; F1 is 0 when P + R = 0
//   composite  0.6 * auroc + 0.4 * (1 - ece)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "groundprobe/error.hpp"

namespace groundprobe {

inline constexpr std::size_t kDefaultBins = 10;
inline constexpr double kCompositeAlpha = 0.6;
inline constexpr double kDecisionThreshold = 0.5;

namespace detail {

inline void check_scores(std::span<const double> conf, std::span<const int> labels, const char* what,
                         bool unit_interval = true) {
    require(!conf.empty(), ErrorKind::validation, std::string(what) + ": empty input");
    require(conf.size() == labels.size(), ErrorKind::validation, std::string(what) + ": length mismatch");
    for (std::size_t i = 0; i < conf.size(); ++i) {
        require(std::isfinite(conf[i]), ErrorKind::validation, std::string(what) + ": non-finite confidence");
        if (unit_interval) {
            require(conf[i] >= 0.0 && conf[i] <= 1.0, ErrorKind::validation,
                    std::string(what) + ": confidence outside [0,1]");
        }
        require(labels[i] == 0 || labels[i] == 1, ErrorKind::validation, std::string(what) + ": labels must be 0/1");
    }
}

inline std::size_t bin_index(double confidence, std::size_t bins) {
    const auto j = static_cast<std::size_t>(std::floor(confidence * static_cast<double>(bins)));
    return std::min(j, bins - 1);
}

}  // namespace detail

struct ReliabilityBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    double mean_confidence = 0.0;  // 0 for empty bins
    double accuracy = 0.0;         // 0 for empty bins
};

struct ReliabilityBins {
    std::size_t n = 0;
    std::vector<ReliabilityBin> bins;

    // sum_j (|B_j| / n) |conf(B_j) - acc(B_j)|
    [[nodiscard]] double weighted_gap() const {
        double total = 0.0;
        for (const auto& bin : bins) {
            if (bin.count == 0) continue;
            total += static_cast<double>(bin.count) / static_cast<double>(n) *
                     std::abs(bin.mean_confidence - bin.accuracy);
        }
        return total;
    }
};

inline ReliabilityBins reliability_bins(std::span<const double> conf, std::span<const int> labels,
                                        std::size_t bins = kDefaultBins) {
    detail::check_scores(conf, labels, "reliability_bins");
    require(bins >= 1, ErrorKind::validation, "reliability_bins: need at least one bin");
    std::vector<double> conf_sum(bins, 0.0);
    std::vector<double> hit_sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (std::size_t i = 0; i < conf.size(); ++i) {
        const auto j = detail::bin_index(conf[i], bins);
        conf_sum[j] += conf[i];
        hit_sum[j] += labels[i];
        ++count[j];
    }
    ReliabilityBins out;
    out.n = conf.size();
    out.bins.resize(bins);
    for (std::size_t j = 0; j < bins; ++j) {
        auto& bin = out.bins[j];
        bin.lower = static_cast<double>(j) / static_cast<double>(bins);
        bin.upper = static_cast<double>(j + 1) / static_cast<double>(bins);
        bin.count = count[j];
        if (count[j] > 0) {
            bin.mean_confidence = conf_sum[j] / static_cast<double>(count[j]);
            bin.accuracy = hit_sum[j] / static_cast<double>(count[j]);
        }
    }
    return out;
}

inline double ece(std::span<const double> conf, std::span<const int> labels, std::size_t bins = kDefaultBins) {
    return reliability_bins(conf, labels, bins).weighted_gap();
}

inline double brier_score(std::span<const double> conf, std::span<const int> labels) {
    detail::check_scores(conf, labels, "brier_score");
    double sum = 0.0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
        const double d = conf[i] - static_cast<double>(labels[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(conf.size());
}

struct ThresholdMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline ThresholdMetrics threshold_metrics(std::span<const double> conf, std::span<const int> labels,
                                          double threshold = kDecisionThreshold) {
    detail::check_scores(conf, labels, "threshold_metrics");
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
        const bool predicted = conf[i] >= threshold;
        if (predicted) {
            labels[i] == 1 ? ++tp : ++fp;
        } else {
            labels[i] == 1 ? ++fn : ++tn;
        }
    }
    ThresholdMetrics out;
    out.accuracy = static_cast<double>(tp + tn) / static_cast<double>(conf.size());
    out.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    out.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    out.f1 = out.precision + out.recall > 0.0 ? 2.0 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
    return out;
}

// Rank-sum form; tied scores share their average rank.
inline double auroc(std::span<const double> conf, std::span<const int> labels) {
    detail::check_scores(conf, labels, "auroc", false);
    const std::size_t n = conf.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });

    double positive_rank_sum = 0.0;  // doubled ranks keep the sum integral
    std::size_t positives = 0;
    for (std::size_t start = 0; start < n;) {
        std::size_t end = start;
        while (end < n && conf[order[end]] == conf[order[start]]) ++end;
        const double doubled_rank = static_cast<double>(start + 1 + end);  // 2 * mean of ranks start+1..end
        for (std::size_t k = start; k < end; ++k) {
            if (labels[order[k]] == 1) {
                positive_rank_sum += doubled_rank;
                ++positives;
            }
        }
        start = end;
    }
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        fail(ErrorKind::undefined_metric, "auroc is undefined when only one class is present");
    }
    const double p = static_cast<double>(positives);
    // 2U = doubled rank sum - n+ (n+ + 1)
    const double doubled_u = positive_rank_sum - p * (p + 1.0);
    return doubled_u / (2.0 * p * static_cast<double>(negatives));
}

inline double aucpr(std::span<const double> conf, std::span<const int> labels) {
    detail::check_scores(conf, labels, "aucpr", false);
    const std::size_t n = conf.size();
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (positives == 0) fail(ErrorKind::undefined_metric, "aucpr is undefined without positive samples");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });

    double ap = 0.0;
    std::size_t tp = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n;) {
        std::size_t end = start;
        std::size_t block_tp = 0;
        while (end < n && conf[order[end]] == conf[order[start]]) {
            block_tp += static_cast<std::size_t>(labels[order[end]]);
            ++end;
        }
        tp += block_tp;
        seen = end;
        if (block_tp > 0) {
            const double precision = static_cast<double>(tp) / static_cast<double>(seen);
            ap += static_cast<double>(block_tp) / static_cast<double>(positives) * precision;
        }
        start = end;
    }
    return ap;
}

inline double composite(double auroc_value, double ece_value) {
    return kCompositeAlpha * auroc_value + (1.0 - kCompositeAlpha) * (1.0 - ece_value);
}

struct MetricReport {
    std::size_t n = 0;
    double prevalence = 0.0;
    double ece = 0.0;
    double brier = 0.0;
    double accuracy = 0.0;
    double f1 = 0.0;
    double aucpr = 0.0;
    double auroc = 0.0;
    double composite = 0.0;
};

inline MetricReport evaluate(std::span<const double> conf, std::span<const int> labels,
                             std::size_t bins = kDefaultBins) {
    detail::check_scores(conf, labels, "evaluate");
    MetricReport r;
    r.n = conf.size();
    r.prevalence = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / static_cast<double>(r.n);
    r.ece = ece(conf, labels, bins);
    r.brier = brier_score(conf, labels);
    const auto t = threshold_metrics(conf, labels);
    r.accuracy = t.accuracy;
    r.f1 = t.f1;
    r.aucpr = aucpr(conf, labels);
    r.auroc = auroc(conf, labels);
    r.composite = composite(r.auroc, r.ece);
    return r;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kReportCsvHeader = "n,prevalence,ece,brier,acc,f1,aucpr,auroc,composite";
inline constexpr const char* kBinsCsvHeader = "bin_lo,bin_hi,count,mean_conf,accuracy";

namespace detail {
inline std::string fmt_real(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}
}  // namespace detail

inline std::string report_csv_row(const MetricReport& r) {
    using detail::fmt_real;
    return std::to_string(r.n) + "," + fmt_real(r.prevalence) + "," + fmt_real(r.ece) + "," + fmt_real(r.brier) + "," +
           fmt_real(r.accuracy) + "," + fmt_real(r.f1) + "," + fmt_real(r.aucpr) + "," + fmt_real(r.auroc) + "," +
           fmt_real(r.composite);
}

inline std::string report_csv(std::span<const MetricReport> reports) {
    std::string out = std::string(kReportCsvHeader) + "\n";
    for (const auto& r : reports) out += report_csv_row(r) + "\n";
    return out;
}

inline std::string bins_csv(const ReliabilityBins& bins) {
    using detail::fmt_real;
    std::string out = std::string(kBinsCsvHeader) + "\n";
    for (const auto& b : bins.bins) {
        out += fmt_real(b.lower) + "," + fmt_real(b.upper) + "," + std::to_string(b.count) + "," +
               fmt_real(b.mean_confidence) + "," + fmt_real(b.accuracy) + "\n";
    }
    return out;
}

}  // namespace groundprobe
