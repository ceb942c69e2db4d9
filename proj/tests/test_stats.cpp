#include <gtest/gtest.h>

#include <cmath>

#include "groundprobe/stats.hpp"
#include "oracles.hpp"

using namespace groundprobe;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::validation;
}

std::string hex_of(int i) {
    HashId id{};
    id[0] = static_cast<std::uint8_t>(i);
    return to_hex(id);
}

}  // namespace

// ---------------------------------------------------------------------------
// Wilcoxon

TEST(Wilcoxon, UnanimousFloors) {
    const std::vector<double> five{0.01, 0.02, 0.03, 0.04, 0.05};
    const auto r5 = wilcoxon_signed_rank(five);
    EXPECT_NEAR(r5.p_value, 0.0625, 1e-15);
    EXPECT_TRUE(r5.exact);
    EXPECT_EQ(r5.w_plus, 15.0);
    const std::vector<double> negative{-0.3, -0.1, -0.2, -0.5, -0.4};
    EXPECT_NEAR(wilcoxon_signed_rank(negative).p_value, 0.0625, 1e-15);
    const std::vector<double> six{1, 2, 3, 4, 5, 6};
    EXPECT_NEAR(wilcoxon_signed_rank(six).p_value, 0.03125, 1e-15);
}

TEST(Wilcoxon, SymmetricPairsGiveOne) {
    const std::vector<double> d{0.1, -0.1, 0.3, -0.3, 0.2, -0.2};
    EXPECT_EQ(wilcoxon_signed_rank(d).p_value, 1.0);
}

TEST(Wilcoxon, ZerosDroppedAndAllZeroFlagged) {
    const std::vector<double> with_zero{0.0, 1, 2, 3, 4, 5};
    const auto r = wilcoxon_signed_rank(with_zero);
    EXPECT_EQ(r.n_effective, 5u);
    EXPECT_NEAR(r.p_value, 0.0625, 1e-15);
    const std::vector<double> zeros(4, 0.0);
    const auto z = wilcoxon_signed_rank(zeros);
    EXPECT_TRUE(z.all_zero);
    EXPECT_EQ(z.p_value, 1.0);
    EXPECT_THROW(wilcoxon_signed_rank(std::vector<double>{}), Error);
}

TEST(Wilcoxon, ExactMatchesEnumerationUpToTen) {
    Rng rng(23);
    for (int trial = 0; trial < 400; ++trial) {
        const std::size_t n = 1 + rng.below(10);
        std::vector<double> d;
        const bool tied = rng.bernoulli(0.5);
        for (std::size_t i = 0; i < n; ++i) {
            const double mag = tied ? static_cast<double>(1 + rng.below(3)) : rng.uniform(0.01, 1.0);
            d.push_back(rng.bernoulli(0.5) ? mag : -mag);
        }
        if (rng.bernoulli(0.2)) d.push_back(0.0);
        ASSERT_NEAR(wilcoxon_signed_rank(d).p_value, oracle::enumerated_wilcoxon(d), 1e-12) << "trial " << trial;
    }
}

TEST(Wilcoxon, NormalApproximationAboveTwentyFive) {
    std::vector<double> d;
    for (int i = 1; i <= 30; ++i) d.push_back(i % 3 == 0 ? -i : i);
    const auto r = wilcoxon_signed_rank(d);
    EXPECT_FALSE(r.exact);
    // No ties: z = (W+ - n(n+1)/4) / sqrt(n(n+1)(2n+1)/24)
    double w = 0.0;
    for (int i = 1; i <= 30; ++i) w += i % 3 == 0 ? 0 : i;
    const double mu = 30.0 * 31.0 / 4.0;
    const double sigma = std::sqrt(30.0 * 31.0 * 61.0 / 24.0);
    const double z = std::abs(w - mu) / sigma;
    EXPECT_NEAR(r.p_value, std::erfc(z / std::sqrt(2.0)), 1e-12);
}

TEST(Wilcoxon, ExactAtTwentyFive) {
    std::vector<double> d(25);
    for (int i = 0; i < 25; ++i) d[static_cast<std::size_t>(i)] = i + 1;
    const auto r = wilcoxon_signed_rank(d);
    EXPECT_TRUE(r.exact);
    EXPECT_NEAR(r.p_value, 2.0 / std::ldexp(1.0, 25), 1e-20);
}

// ---------------------------------------------------------------------------
// paired bootstrap

TEST(PairedBootstrap, PerfectVersusConstant) {
    std::vector<double> perfect, constant;
    std::vector<int> y;
    for (int i = 0; i < 100; ++i) {
        y.push_back(i % 2);
        perfect.push_back(i % 2);
        constant.push_back(0.5);
    }
    const auto r = paired_bootstrap_bs_delta(perfect, constant, y, 2000, 23);
    EXPECT_NEAR(r.mean_delta, -0.25, 1e-12);
    EXPECT_NEAR(r.ci_low, -0.25, 1e-12);
    EXPECT_NEAR(r.ci_high, -0.25, 1e-12);
    EXPECT_LT(r.ci_high, 0.0);
    EXPECT_EQ(r.resamples, 2000u);
}

TEST(PairedBootstrap, IdenticalInputsGiveZero) {
    Rng rng(1);
    std::vector<double> a;
    std::vector<int> y;
    for (int i = 0; i < 50; ++i) {
        a.push_back(rng.uniform());
        y.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    const auto r = paired_bootstrap_bs_delta(a, a, y);
    EXPECT_EQ(r.mean_delta, 0.0);
    EXPECT_EQ(r.ci_low, 0.0);
    EXPECT_EQ(r.ci_high, 0.0);
}

TEST(PairedBootstrap, BitwiseDeterministicAndSeedSensitive) {
    Rng rng(2);
    std::vector<double> a, b;
    std::vector<int> y;
    for (int i = 0; i < 80; ++i) {
        a.push_back(rng.uniform());
        b.push_back(rng.uniform());
        y.push_back(rng.bernoulli(0.6) ? 1 : 0);
    }
    const auto r1 = paired_bootstrap_bs_delta(a, b, y, 2000, 23);
    const auto r2 = paired_bootstrap_bs_delta(a, b, y, 2000, 23);
    EXPECT_EQ(std::memcmp(&r1.mean_delta, &r2.mean_delta, sizeof(double)), 0);
    EXPECT_EQ(r1.ci_low, r2.ci_low);
    EXPECT_EQ(r1.ci_high, r2.ci_high);
    EXPECT_LE(r1.ci_low, r1.ci_high);
    const auto r3 = paired_bootstrap_bs_delta(a, b, y, 2000, 24);
    EXPECT_NE(r1.mean_delta, r3.mean_delta);
}

// ---------------------------------------------------------------------------
// cluster bootstrap

TEST(ClusterBootstrap, OppositeClustersNearOne) {
    const std::vector<double> d{1.0, -1.0};
    EXPECT_GT(cluster_bootstrap(d, 10000, 23).p_value, 0.95);
}

TEST(ClusterBootstrap, UnanimousHitsFloor) {
    const std::vector<double> d{0.2, 0.2, 0.2, 0.2, 0.2};
    const auto r = cluster_bootstrap(d, 10000, 23);
    EXPECT_NEAR(r.p_value, 1.0 / 10001.0, 1e-15);
    EXPECT_NEAR(r.mean_delta, 0.2, 1e-15);
}

TEST(ClusterBootstrap, FloorDeterminismAndErrors) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> d;
        for (std::size_t i = 0, k = 2 + rng.below(6); i < k; ++i) d.push_back(rng.normal(0.1, 0.3));
        const auto a = cluster_bootstrap(d, 500, 42);
        EXPECT_GE(a.p_value, 1.0 / 501.0);
        EXPECT_LE(a.p_value, 1.0);
        EXPECT_EQ(a.p_value, cluster_bootstrap(d, 500, 42).p_value);
    }
    EXPECT_EQ(kind_of([] { cluster_bootstrap(std::vector<double>{0.3}); }), ErrorKind::validation);
}

// ---------------------------------------------------------------------------
// Holm

TEST(Holm, Examples) {
    EXPECT_EQ(holm_bonferroni(std::vector<double>{0.2}), std::vector<double>{0.2});
    const auto adj = holm_bonferroni(std::vector<double>{0.01, 0.04, 0.03, 0.005});
    ASSERT_EQ(adj.size(), 4u);
    EXPECT_NEAR(adj[0], 0.03, 1e-15);
    EXPECT_NEAR(adj[1], 0.06, 1e-15);
    EXPECT_NEAR(adj[2], 0.06, 1e-15);
    EXPECT_NEAR(adj[3], 0.02, 1e-15);
    EXPECT_EQ(holm_bonferroni(std::vector<double>{1, 1, 1}), (std::vector<double>{1, 1, 1}));
    EXPECT_THROW(holm_bonferroni(std::vector<double>{1.5}), Error);
}

TEST(Holm, DominanceAndMonotonicity) {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> p;
        for (std::size_t i = 0, m = 1 + rng.below(8); i < m; ++i) p.push_back(rng.uniform());
        const auto adj = holm_bonferroni(p);
        std::vector<std::size_t> order(p.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_GE(adj[i], p[i]);
            EXPECT_LE(adj[i], 1.0);
            if (i > 0) {
                EXPECT_GE(adj[order[i]], adj[order[i - 1]]);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// subsets

namespace {

struct SubsetFixture {
    Manifest manifest;
    std::vector<ScoredSample> samples;
};

// Six samples; ids 0, 2, 4 are image-invariant (flip_swap = 0).
SubsetFixture six_samples() {
    SubsetFixture f;
    const double conf[] = {0.9, 0.8, 0.3, 0.6, 0.95, 0.2};
    const int label[] = {1, 1, 0, 0, 0, 1};
    const double top1[] = {0.5, 0.9, 0.85, 0.3, 0.99, 0.7};
    for (int i = 0; i < 6; ++i) {
        ManifestEntry e;
        e.hash_id_hex = hex_of(i);
        e.dataset = i < 3 ? "gqa" : "pope";
        e.flip_swap = i % 2 == 0 ? 0 : 1;
        e.dp_swap = 0.1 * i;
        e.top1_prob = top1[i];
        f.manifest.add(e);
        f.samples.push_back({e.hash_id_hex, conf[i], label[i]});
    }
    return f;
}

}  // namespace

TEST(Subset, ImageInvariantSelectsExactlyThree) {
    const auto f = six_samples();
    const auto sel = select_subset(f.samples, f.manifest, image_invariant());
    EXPECT_EQ(sel.confidences, (std::vector<double>{0.9, 0.3, 0.95}));
    EXPECT_EQ(sel.labels, (std::vector<int>{1, 0, 0}));
    const auto r = subset_metrics(f.samples, f.manifest, image_invariant());
    EXPECT_EQ(r.n, 3u);
    // positive 0.9 vs negatives {0.3, 0.95}: one of two pairs won
    EXPECT_DOUBLE_EQ(r.auroc, 0.5);
    EXPECT_NEAR(r.brier, (0.01 + 0.09 + 0.9025) / 3.0, 1e-15);
}

TEST(Subset, AllPassEqualsDirectMetrics) {
    const auto f = six_samples();
    std::vector<double> conf;
    std::vector<int> y;
    for (const auto& s : f.samples) {
        conf.push_back(s.confidence);
        y.push_back(s.label);
    }
    const auto direct = evaluate(conf, y);
    const auto sub = subset_metrics(f.samples, f.manifest, all_samples());
    EXPECT_EQ(sub.ece, direct.ece);
    EXPECT_EQ(sub.auroc, direct.auroc);
    EXPECT_EQ(sub.aucpr, direct.aucpr);
    EXPECT_EQ(sub.brier, direct.brier);
}

TEST(Subset, EmptySelectionNamesPredicate) {
    const auto f = six_samples();
    try {
        subset_metrics(f.samples, f.manifest, parse_subset("dataset=vqa"));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::undefined_metric);
        EXPECT_NE(std::string(e.what()).find("dataset=vqa"), std::string::npos);
    }
}

TEST(Subset, FailureSubset) {
    const auto f = six_samples();
    const auto sel = select_subset(f.samples, f.manifest, failure_subset());
    // flip_swap 0, label 0, top1 > 0.8: ids 2 and 4
    EXPECT_EQ(sel.confidences, (std::vector<double>{0.3, 0.95}));
}

TEST(Subset, ParseExpressions) {
    const auto f = six_samples();
    EXPECT_EQ(select_subset(f.samples, f.manifest, parse_subset("flip_swap=0")).labels.size(), 3u);
    EXPECT_EQ(select_subset(f.samples, f.manifest, parse_subset("flip_swap!=0,dataset=pope")).labels.size(), 2u);
    EXPECT_EQ(select_subset(f.samples, f.manifest, parse_subset("dp_swap>=0.2,dp_swap<0.4")).labels.size(), 2u);
    EXPECT_EQ(select_subset(f.samples, f.manifest, parse_subset("label=1,top1_prob<=0.7")).labels.size(), 2u);
    EXPECT_EQ(select_subset(f.samples, f.manifest, parse_subset("category!=x")).labels.size(), 6u);
    for (const char* bad : {"", "flip_swap", "color=1", "dataset>3", "label=abc", "=1", "flip_swap!1"}) {
        EXPECT_EQ(kind_of([&] { parse_subset(bad); }), ErrorKind::validation) << bad;
    }
}

TEST(Subset, UnmeasuredFieldIsFalse) {
    Manifest m;
    ManifestEntry e;
    e.hash_id_hex = hex_of(1);
    m.add(e);
    const std::vector<ScoredSample> s{{e.hash_id_hex, 0.5, 1}};
    EXPECT_TRUE(select_subset(s, m, parse_subset("flip_swap=0")).labels.empty());
    EXPECT_TRUE(select_subset(s, m, parse_subset("top1_prob<2")).labels.empty());
    const std::vector<ScoredSample> missing{{hex_of(9), 0.5, 1}};
    EXPECT_EQ(kind_of([&] { select_subset(missing, m, all_samples()); }), ErrorKind::validation);
}

// ---------------------------------------------------------------------------
// aggregation

namespace {

DatasetScores constant_dataset(const std::string& name, std::size_t n, double conf, std::size_t correct) {
    DatasetScores d{name, std::vector<double>(n, conf), std::vector<int>(n, 0)};
    std::fill(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(correct), 1);
    return d;
}

}  // namespace

TEST(Aggregate, EqualWeightVersusPooled) {
    // Both datasets sit in one bin with opposite gaps, so pooling cancels.
    const std::vector<DatasetScores> ds{constant_dataset("a", 900, 0.7, 720), constant_dataset("b", 100, 0.7, 40)};
    EXPECT_NEAR(evaluate(ds[0].confidences, ds[0].labels).ece, 0.1, 1e-12);
    EXPECT_NEAR(evaluate(ds[1].confidences, ds[1].labels).ece, 0.3, 1e-12);
    EXPECT_NEAR(aggregate(ds, AggregationMode::equal_weight).ece, 0.2, 1e-12);
    const double pooled = aggregate(ds, AggregationMode::pooled).ece;
    EXPECT_NEAR(pooled, 0.06, 1e-12);
    EXPECT_GT(std::abs(pooled - (0.9 * 0.1 + 0.1 * 0.3)), 0.05);
}

TEST(Aggregate, AgreementCases) {
    Rng rng(5);
    DatasetScores one{"x", {}, {}};
    for (int i = 0; i < 300; ++i) {
        one.confidences.push_back(rng.uniform());
        one.labels.push_back(rng.bernoulli(one.confidences.back()) ? 1 : 0);
    }
    const std::vector<DatasetScores> single{one};
    const auto p = aggregate(single, AggregationMode::pooled);
    const auto e = aggregate(single, AggregationMode::equal_weight);
    EXPECT_NEAR(p.ece, e.ece, 1e-15);
    EXPECT_NEAR(p.auroc, e.auroc, 1e-15);
    EXPECT_NEAR(p.composite, e.composite, 1e-15);

    DatasetScores twin = one;
    twin.name = "y";
    const std::vector<DatasetScores> pair{one, twin};
    EXPECT_NEAR(aggregate(pair, AggregationMode::pooled).ece, aggregate(pair, AggregationMode::equal_weight).ece, 1e-12);
    EXPECT_NEAR(aggregate(pair, AggregationMode::pooled).auroc, aggregate(pair, AggregationMode::equal_weight).auroc, 1e-12);
}

TEST(Aggregate, SmallDatasetsExcludedFromEqualWeight) {
    const std::vector<DatasetScores> ds{constant_dataset("big", 100, 0.7, 80), constant_dataset("tiny", 99, 0.7, 0)};
    EXPECT_NEAR(aggregate(ds, AggregationMode::equal_weight).ece, 0.1, 1e-12);
    const std::vector<DatasetScores> only_tiny{constant_dataset("tiny", 99, 0.7, 50)};
    EXPECT_EQ(kind_of([&] { aggregate(only_tiny, AggregationMode::equal_weight); }), ErrorKind::undefined_metric);
    EXPECT_NO_THROW(aggregate(only_tiny, AggregationMode::pooled));
}

TEST(StatsReportJson, FieldsAndNulls) {
    StatsReport r;
    r.comparison = "full_vs_no_rank";
    r.metric = "auroc";
    r.mean_delta = -0.01;
    r.p_raw = 0.0625;
    r.n = 5;
    r.mode = "wilcoxon";
    const auto j = to_json(r);
    for (const char* k : {"comparison", "metric", "mean_delta", "ci_low", "ci_high", "p_raw", "p_holm", "n", "mode"}) {
        EXPECT_TRUE(j.contains(k)) << k;
    }
    EXPECT_TRUE(j["ci_low"].is_null());
    EXPECT_EQ(j["p_raw"].get<double>(), 0.0625);
}
