#include <gtest/gtest.h>

#include <cmath>

#include "groundprobe/ablation.hpp"
#include "groundprobe/synthgen.hpp"

using namespace groundprobe;

namespace {

SynthConfig tiny_synth(std::uint64_t seed = 23) {
    SynthConfig c;
    c.n_train = 600;
    c.n_val = 200;
    c.n_test = 300;
    c.d_h = 8;
    c.seed = seed;
    return c;
}

AblationData data_from(const SynthDataset& d) {
    return make_ablation_data(d.split(Split::train), d.split(Split::val), d.split(Split::test), d.manifest);
}

AblationOptions quick_options() {
    AblationOptions o;
    o.base.hidden_widths = {8};
    o.base.max_epochs = 12;
    o.base.patience = 5;
    o.seeds = {23, 42};
    o.cluster_resamples = 200;
    o.jobs = 2;
    return o;
}

}  // namespace

TEST(Variants, CoefficientOverrides) {
    ProbeConfig c;
    c.beta = 0.3;
    c.lambda = 0.2;
    EXPECT_EQ(apply_variant(c, Variant::full).beta, 0.3);
    EXPECT_EQ(apply_variant(c, Variant::full).lambda, 0.2);
    EXPECT_EQ(apply_variant(c, Variant::no_brier).beta, 0.0);
    EXPECT_EQ(apply_variant(c, Variant::no_brier).lambda, 0.2);
    EXPECT_EQ(apply_variant(c, Variant::no_rank).beta, 0.3);
    EXPECT_EQ(apply_variant(c, Variant::no_rank).lambda, 0.0);
    EXPECT_EQ(apply_variant(c, Variant::bce_only).beta, 0.0);
    EXPECT_EQ(apply_variant(c, Variant::bce_only).lambda, 0.0);
    for (const auto v : all_variants()) EXPECT_EQ(variant_from_string(to_string(v)), v);
    EXPECT_THROW(variant_from_string("no_bce"), Error);
}

TEST(ConfidenceDistribution, Examples) {
    auto d = confidence_distribution(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0});
    EXPECT_NEAR(d.separation, 0.8, 1e-15);
    EXPECT_EQ(d.frac_above_half, 0.5);
    EXPECT_EQ(d.frac_below_tenth, 0.0);  // 0.1 is not below 0.1
    d = confidence_distribution(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1});
    EXPECT_EQ(d.separation, 0.0);
    d = confidence_distribution(std::vector<double>{1, 0, 1, 0}, std::vector<int>{1, 0, 1, 0});
    EXPECT_EQ(d.separation, 1.0);
    EXPECT_EQ(d.mean_correct, 1.0);
    EXPECT_EQ(d.mean_incorrect, 0.0);
    try {
        confidence_distribution(std::vector<double>{0.2, 0.3}, std::vector<int>{1, 1});
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::undefined_metric);
    }
}

TEST(Deltas, Antisymmetry) {
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        MetricReport a, b;
        a.ece = rng.uniform();
        a.brier = rng.uniform();
        a.aucpr = rng.uniform();
        a.auroc = rng.uniform();
        b.ece = rng.uniform();
        b.brier = rng.uniform();
        b.aucpr = rng.uniform();
        b.auroc = rng.uniform();
        const auto ab = metric_deltas(a, b);
        const auto ba = metric_deltas(b, a);
        EXPECT_EQ(ab.ece, -ba.ece);
        EXPECT_EQ(ab.brier, -ba.brier);
        EXPECT_EQ(ab.aucpr, -ba.aucpr);
        EXPECT_EQ(ab.auroc, -ba.auroc);
        EXPECT_EQ(ab.auroc, b.auroc - a.auroc);
    }
}

TEST(RunAblation, FullOnlyHasZeroDeltas) {
    const auto data = data_from(generate(tiny_synth()));
    auto o = quick_options();
    o.variants = {Variant::full};
    const auto r = run_ablation(data, o);
    ASSERT_EQ(r.variants.size(), 1u);
    EXPECT_EQ(r.variants[0].delta.ece, 0.0);
    EXPECT_EQ(r.variants[0].delta.brier, 0.0);
    EXPECT_EQ(r.variants[0].delta.aucpr, 0.0);
    EXPECT_EQ(r.variants[0].delta.auroc, 0.0);
    EXPECT_TRUE(r.significance.empty());
    o.variants = {Variant::no_rank};
    EXPECT_THROW(run_ablation(data, o), Error);
}

TEST(RunAblation, NoRankIgnoresBlankContents) {
    const auto synth = generate(tiny_synth());
    const auto data = data_from(synth);
    auto scrambled = data;
    Rng rng(11);
    for (Eigen::Index i = 0; i < scrambled.train.blank.size(); ++i) scrambled.train.blank.data()[i] = 5.0 * rng.normal();
    auto o = quick_options();
    o.variants = {Variant::full, Variant::no_rank, Variant::bce_only};
    const auto a = run_ablation(data, o);
    const auto b = run_ablation(scrambled, o);
    for (const auto v : {Variant::no_rank, Variant::bce_only}) {
        for (const auto seed : o.seeds) {
            EXPECT_EQ(a.run(v, seed).probe, b.run(v, seed).probe);
            EXPECT_EQ(a.run(v, seed).test.auroc, b.run(v, seed).test.auroc);
        }
    }
    // the full variant does see the blank view
    EXPECT_FALSE(a.run(Variant::full, 23).probe == b.run(Variant::full, 23).probe);
}

TEST(RunAblation, StructureDeterminismAndSignificance) {
    const auto data = data_from(generate(tiny_synth()));
    auto o = quick_options();
    const auto r = run_ablation(data, o);
    ASSERT_EQ(r.runs.size(), 8u);
    EXPECT_EQ(r.runs[0].variant, Variant::full);
    EXPECT_EQ(r.runs[1].seed, 42u);
    EXPECT_EQ(r.runs[2].variant, Variant::no_brier);
    for (const auto& run : r.runs) {
        EXPECT_EQ(run.config.seed, run.seed);
        ASSERT_TRUE(run.ungrounded_mean_confidence.has_value());
        EXPECT_GT(*run.ungrounded_mean_confidence, 0.0);
    }
    EXPECT_EQ(r.run(Variant::bce_only, 42).config.beta, 0.0);
    // 3 comparisons x 4 metrics x 2 test types
    EXPECT_EQ(r.significance.size(), 24u);
    for (const auto& s : r.significance) {
        ASSERT_TRUE(s.p_holm.has_value());
        EXPECT_GE(*s.p_holm, *s.p_raw);
        EXPECT_EQ(s.n, 2u);
    }
    // delta = mean(variant) - mean(full)
    const auto& full = r.variants[0].metrics.mean;
    const auto& no_rank = r.variants[2];
    EXPECT_NEAR(no_rank.delta.auroc, no_rank.metrics.mean.auroc - full.auroc, 1e-15);

    o.jobs = 1;
    const auto serial = run_ablation(data, o);
    EXPECT_EQ(runs_csv(serial.runs), runs_csv(r.runs));
    EXPECT_EQ(delta_csv(serial.variants), delta_csv(r.variants));
}

TEST(RunAblation, CsvLayout) {
    const auto data = data_from(generate(tiny_synth()));
    auto o = quick_options();
    o.seeds = {23};
    o.variants = {Variant::full, Variant::bce_only};
    const auto r = run_ablation(data, o);
    const auto csv = delta_csv(r.variants);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,ECE,ΔECE,BS,ΔBS,AUCPR,ΔAUCPR,AUROC,ΔAUROC");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_EQ(csv.substr(csv.find('\n') + 1, 5), "full,");
    const auto runs = runs_csv(r.runs);
    EXPECT_EQ(std::count(runs.begin(), runs.end(), '\n'), 3);
}

TEST(RunAblation, SearchModeRespectsVariant) {
    const auto data = data_from(generate(tiny_synth()));
    auto o = quick_options();
    o.mode = AblationMode::search;
    o.seeds = {23};
    o.variants = {Variant::full, Variant::bce_only, Variant::no_brier};
    o.search.trials = 3;
    o.search.space.layer_choices = {{}, {8}};
    const auto r = run_ablation(data, o);
    EXPECT_EQ(r.run(Variant::bce_only, 23).config.beta, 0.0);
    EXPECT_EQ(r.run(Variant::bce_only, 23).config.lambda, 0.0);
    EXPECT_EQ(r.run(Variant::no_brier, 23).config.beta, 0.0);
    EXPECT_GT(r.run(Variant::no_brier, 23).config.lambda, 0.0);
    EXPECT_GT(r.run(Variant::full, 23).config.lambda, 0.0);
}
