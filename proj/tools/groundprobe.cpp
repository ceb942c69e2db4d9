// groundprobe: synth, train, eval, reliability, hpo, ablate, stats, inspect.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli_support.hpp"
#include "groundprobe/groundprobe.hpp"

namespace fs = std::filesystem;
using namespace groundprobe;
using groundprobe::cli::Resolver;
using groundprobe::cli::RunManifest;

namespace {

constexpr const char* kBaseFile = "base.feat";
constexpr const char* kBlankFile = "blank.feat";
constexpr const char* kManifestFile = "manifest.jsonl";
constexpr const char* kRunManifestFile = "run_manifest.json";

std::vector<std::string> g_argv;

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::io, "cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text, RunManifest& run) {
    detail::write_file_text(path, text);
    run.output(path);
}

// "128,64" -> {128, 64}; "", "none" and "linear" -> {}.
Widths parse_widths(const std::string& text) {
    if (text.empty() || text == "none" || text == "linear") return {};
    Widths out;
    for (const auto& cell : cli::split_csv_line(text)) {
        require(!cell.empty() && cell.find_first_not_of("0123456789") == std::string::npos, ErrorKind::validation,
                "bad hidden width '" + cell + "'");
        out.push_back(std::stoul(cell));
    }
    return out;
}

std::string format_widths(const Widths& w) {
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
    return out;
}

template <class T>
std::vector<T> parse_list(const std::string& text, T (*convert)(const std::string&)) {
    std::vector<T> out;
    for (const auto& cell : cli::split_csv_line(text)) {
        if (!cell.empty()) out.push_back(convert(cell));
    }
    return out;
}

std::uint64_t to_u64(const std::string& s) {
    require(!s.empty() && s.find_first_not_of("0123456789") == std::string::npos, ErrorKind::validation,
            "bad seed '" + s + "'");
    return std::stoull(s);
}

// Paired samples from a base file and an optional blank file. Without a
// blank file the samples carry no blank view.
struct LoadedViews {
    std::uint32_t d_h = 0;
    std::vector<PairedSample> samples;
    std::size_t unmatched = 0;
};

LoadedViews load_views(const std::string& base_path, const std::string& blank_path, const Manifest* manifest,
                       RunManifest& run) {
    run.input(base_path);
    const FeatureFile base = read_feature_file(base_path);
    LoadedViews out;
    out.d_h = base.d_h;
    if (!blank_path.empty()) {
        run.input(blank_path);
        const FeatureFile blank = read_feature_file(blank_path);
        require(blank.d_h == base.d_h, ErrorKind::format, "base and blank files disagree on d_h");
        auto joined = join_views(base.records, blank.records, manifest);
        out.unmatched = joined.unmatched_base.size() + joined.unmatched_blank.size();
        if (out.unmatched > 0) {
            std::cerr << "note: " << joined.unmatched_base.size() << " base and " << joined.unmatched_blank.size()
                      << " blank records have no partner view\n";
        }
        out.samples = std::move(joined.pairs);
        return out;
    }
    for (const auto& r : base.records) {
        PairedSample s;
        s.hash_id = r.hash_id;
        s.h_base = r.vector;
        s.y = r.label;
        s.split = r.split;
        if (manifest) {
            if (const auto* e = manifest->find(r.hash_id)) s.dataset = e->dataset;
        }
        out.samples.push_back(std::move(s));
    }
    return out;
}

std::optional<Manifest> load_manifest(const std::string& path, RunManifest& run) {
    if (path.empty()) return std::nullopt;
    run.input(path);
    return read_manifest(path);
}

// ---------------------------------------------------------------------------
// Probe config flags shared by train, hpo and ablate

struct ProbeFlags {
    std::string hidden = format_widths(ProbeConfig{}.hidden_widths);
    ProbeConfig config;

    void add(CLI::App* app) {
        app->add_option("--hidden", hidden, "hidden widths, comma-separated; 'none' for a linear probe");
        app->add_option("--dropout", config.dropout);
        app->add_option("--lr", config.learning_rate, "learning rate");
        app->add_option("--wd", config.weight_decay, "weight decay (L2)");
        app->add_option("--beta", config.beta, "Brier weight");
        app->add_option("--lambda", config.lambda, "rank weight");
        app->add_option("--gamma", config.gamma, "rank margin");
        app->add_option("--batch-size", config.batch_size);
        app->add_option("--max-epochs", config.max_epochs);
        app->add_option("--patience", config.patience);
    }

    ProbeConfig resolve(const Resolver& r) {
        r.resolve("hidden", hidden);
        r.resolve("dropout", config.dropout);
        r.resolve("lr", config.learning_rate);
        r.resolve("wd", config.weight_decay);
        r.resolve("beta", config.beta);
        r.resolve("lambda", config.lambda);
        r.resolve("gamma", config.gamma);
        r.resolve("batch-size", config.batch_size);
        r.resolve("max-epochs", config.max_epochs);
        r.resolve("patience", config.patience);
        config.hidden_widths = parse_widths(hidden);
        validate(config);
        for (const auto& w : config_warnings(config)) std::cerr << "warning: " << w << "\n";
        return config;
    }
};

// ---------------------------------------------------------------------------
// synth

struct SynthCmd {
    SynthConfig config;
    std::string out;
    std::string config_path;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("synth", "generate synthetic paired feature files");
        app->add_option("--n", config.n_train, "training samples (val defaults to n/4, test to n/2)");
        app->add_option("--n-val", config.n_val);
        app->add_option("--n-test", config.n_test);
        app->add_option("--dh", config.d_h, "hidden dimension");
        app->add_option("--rho", config.rho_grounded, "fraction of grounded samples");
        app->add_option("--q-grounded", config.q_grounded);
        app->add_option("--q-prior", config.q_prior);
        app->add_option("--signal", config.signal_strength);
        app->add_option("--grounding", config.grounding_strength);
        app->add_option("--noise", config.noise_sigma);
        app->add_option("--seed", config.seed);
        app->add_option("--config", config_path, "JSON config file; flags take precedence");
        app->add_option("--out", out, "output directory")->required();
        app->callback([this, app] { run(*app); });
    }

    void run(const CLI::App& app) {
        RunManifest manifest("synth", g_argv);
        if (!config_path.empty()) manifest.input(config_path);
        const Resolver r(app, cli::load_config(config_path));
        r.resolve("n", config.n_train);
        if (app.get_option("--n-val")->count() == 0) config.n_val = config.n_train / 4;
        if (app.get_option("--n-test")->count() == 0) config.n_test = config.n_train / 2;
        r.resolve("n-val", config.n_val);
        r.resolve("n-test", config.n_test);
        r.resolve("dh", config.d_h);
        r.resolve("rho", config.rho_grounded);
        r.resolve("q-grounded", config.q_grounded);
        r.resolve("q-prior", config.q_prior);
        r.resolve("signal", config.signal_strength);
        r.resolve("grounding", config.grounding_strength);
        r.resolve("noise", config.noise_sigma);
        r.resolve("seed", config.seed);
        const SynthDataset data = generate(config);
        ensure_dir(out);
        const fs::path dir(out);
        write_feature_file(dir / kBaseFile, data.d_h, data.records(View::base));
        write_feature_file(dir / kBlankFile, data.d_h, data.records(View::blank));
        write_manifest(dir / kManifestFile, data.manifest);
        for (const char* f : {kBaseFile, kBlankFile, kManifestFile}) manifest.output(dir / f);
        manifest.config(to_json(config));
        manifest.seeds({config.seed});
        manifest.write(dir / kRunManifestFile);
        std::cout << "wrote " << data.samples.size() << " paired samples (d_h=" << data.d_h << ") to " << out << "\n";
    }
};

// ---------------------------------------------------------------------------
// train

struct TrainCmd {
    ProbeFlags probe;
    std::string base, blank, manifest_path, out, config_path;
    std::uint64_t seed = 23;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("train", "train a probe on the train split, selecting on val");
        app->add_option("--base", base, "base-view feature file")->required();
        app->add_option("--blank", blank, "blank-view feature file (required when lambda > 0)");
        app->add_option("--manifest", manifest_path);
        app->add_option("--seed", seed);
        app->add_option("--config", config_path, "JSON config file; flags take precedence");
        app->add_option("--out", out, "output directory")->required();
        probe.add(app);
        app->callback([this, app] { run(*app); });
    }

    void run(const CLI::App& app) {
        RunManifest rm("train", g_argv);
        if (!config_path.empty()) rm.input(config_path);
        const Resolver r(app, cli::load_config(config_path));
        r.resolve("seed", seed);
        ProbeConfig config = probe.resolve(r);
        config.seed = seed;
        if (config.lambda != 0.0) {
            require(!blank.empty(), ErrorKind::validation,
                    "lambda > 0 trains the rank term, which needs paired input: pass --blank");
        }
        const auto manifest = load_manifest(manifest_path, rm);
        const auto views = load_views(base, blank, manifest ? &*manifest : nullptr, rm);
        const auto train_set = select_split(views.samples, Split::train);
        const auto val_set = select_split(views.samples, Split::val);
        const TrainResult result = groundprobe::train(train_set, val_set, config);
        ensure_dir(out);
        const fs::path dir(out);
        write_probe(dir / "probe.bin", result.probe);
        rm.output(dir / "probe.bin");
        write_text(dir / "history.json", to_json(result.history).dump(2) + "\n", rm);
        rm.config(to_json(config));
        rm.seeds({config.seed});
        rm.write(dir / kRunManifestFile);
        const auto& best = result.history.epochs.at(result.history.best_epoch - 1);
        std::cout << "best epoch " << result.history.best_epoch << " of " << result.history.stopped_epoch
                  << ": val composite " << best.val_composite << ", ece " << best.val_ece << ", auroc "
                  << best.val_auroc << "\n";
    }
};

// ---------------------------------------------------------------------------
// eval / reliability

struct Scored {
    std::vector<ScoredSample> samples;
    std::vector<std::string> datasets;
};

struct EvalCmd {
    std::string probe_path, base, scores, manifest_path, subset, mode = "pooled", split = "test", out, config_path;
    std::size_t bins = kDefaultBins;
    bool reliability_only = false;

    void add(CLI::App& root, const char* name, bool only_bins) {
        reliability_only = only_bins;
        auto* app = root.add_subcommand(name, only_bins ? "reliability bins for a probe or score file"
                                                       : "metric report and reliability bins");
        app->add_option("--probe", probe_path, "probe file (with --base)");
        app->add_option("--base", base, "base-view feature file to score");
        app->add_option("--scores", scores, "CSV with confidence,label[,hash_id_hex][,dataset] instead of a probe");
        app->add_option("--manifest", manifest_path);
        app->add_option("--subset", subset, "predicate over manifest fields, e.g. flip_swap=0");
        app->add_option("--mode", mode, "aggregation across datasets")->check(CLI::IsMember({"pooled", "equal-weight"}));
        app->add_option("--split", split, "split to score when reading a feature file")
            ->check(CLI::IsMember({"train", "val", "test", "all"}));
        app->add_option("--bins", bins);
        app->add_option("--config", config_path);
        app->add_option("--out", out, "output directory")->required();
        app->callback([this, app] { run(*app); });
    }

    Scored score(RunManifest& rm, const Manifest* manifest) {
        Scored out;
        if (!scores.empty()) {
            require(probe_path.empty(), ErrorKind::validation, "pass either --scores or --probe, not both");
            rm.input(scores);
            const auto table = cli::read_csv(scores);
            const auto conf_col = table.column_or("confidence", 0);
            const auto label_col = table.column_or("label", 1);
            require(conf_col && label_col, ErrorKind::format, scores + " needs confidence and label columns");
            const auto id_col = table.column_or("hash_id_hex", 2);
            const auto ds_col = table.column_or("dataset", 3);
            const std::size_t width = table.header.empty() ? table.rows.front().size() : table.header.size();
            for (const auto& row : table.rows) {
                require(row.size() == width, ErrorKind::format, scores + ": ragged row");
                ScoredSample s;
                s.confidence = cli::parse_real(row[*conf_col], scores);
                s.label = static_cast<int>(cli::parse_real(row[*label_col], scores));
                if (id_col) s.hash_id_hex = row[*id_col];
                std::string ds = ds_col ? row[*ds_col] : std::string();
                if (ds.empty() && manifest && id_col) {
                    if (const auto* e = manifest->find(s.hash_id_hex)) ds = e->dataset;
                }
                out.samples.push_back(s);
                out.datasets.push_back(ds);
            }
            return out;
        }
        require(!probe_path.empty() && !base.empty(), ErrorKind::validation, "pass --scores, or --probe with --base");
        rm.input(probe_path);
        rm.input(base);
        const Probe probe = read_probe(probe_path);
        const FeatureFile file = read_feature_file(base);
        require(file.d_h == probe.d_h, ErrorKind::validation, "probe d_h does not match the feature file");
        std::vector<const FeatureRecord*> chosen;
        for (const auto& r : file.records) {
            if (split == "all" || r.split == split_from_string(split)) chosen.push_back(&r);
        }
        require(!chosen.empty(), ErrorKind::validation, "no records in split '" + split + "'");
        Matrix features(static_cast<Eigen::Index>(chosen.size()), static_cast<Eigen::Index>(file.d_h));
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            require(chosen[i]->label != Label::unlabeled, ErrorKind::validation,
                    "evaluation needs labels; record " + to_hex(chosen[i]->hash_id) + " is unlabeled");
            for (std::size_t j = 0; j < file.d_h; ++j) {
                features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = chosen[i]->vector[j];
            }
        }
        const auto conf = predict(probe, features);
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            ScoredSample s{to_hex(chosen[i]->hash_id), conf[i], label_value(chosen[i]->label)};
            std::string ds;
            if (manifest) {
                if (const auto* e = manifest->find(s.hash_id_hex)) ds = e->dataset;
            }
            out.samples.push_back(std::move(s));
            out.datasets.push_back(ds);
        }
        return out;
    }

    void run(const CLI::App& app) {
        RunManifest rm(reliability_only ? "reliability" : "eval", g_argv);
        if (!config_path.empty()) rm.input(config_path);
        const Resolver r(app, cli::load_config(config_path));
        r.resolve("bins", bins);
        r.resolve("mode", mode);
        r.resolve("subset", subset);
        r.resolve("split", split);
        const auto manifest = load_manifest(manifest_path, rm);
        Scored scored = score(rm, manifest ? &*manifest : nullptr);

        if (!subset.empty()) {
            require(manifest.has_value(), ErrorKind::validation, "--subset needs --manifest");
            const auto predicate = parse_subset(subset);
            Scored kept;
            for (std::size_t i = 0; i < scored.samples.size(); ++i) {
                const auto* e = manifest->find(scored.samples[i].hash_id_hex);
                require(e != nullptr, ErrorKind::validation, "no manifest entry for " + scored.samples[i].hash_id_hex);
                if (predicate.test(*e, scored.samples[i].label)) {
                    kept.samples.push_back(scored.samples[i]);
                    kept.datasets.push_back(scored.datasets[i]);
                }
            }
            if (kept.samples.empty()) fail(ErrorKind::undefined_metric, "subset '" + subset + "' selects no samples");
            scored = std::move(kept);
        }

        std::vector<DatasetScores> groups;
        for (std::size_t i = 0; i < scored.samples.size(); ++i) {
            auto it = std::find_if(groups.begin(), groups.end(),
                                   [&](const DatasetScores& g) { return g.name == scored.datasets[i]; });
            if (it == groups.end()) {
                groups.push_back({scored.datasets[i], {}, {}});
                it = groups.end() - 1;
            }
            it->confidences.push_back(scored.samples[i].confidence);
            it->labels.push_back(scored.samples[i].label);
        }
        std::vector<double> all_conf;
        std::vector<int> all_y;
        for (const auto& s : scored.samples) {
            all_conf.push_back(s.confidence);
            all_y.push_back(s.label);
        }

        ensure_dir(out);
        const fs::path dir(out);
        write_text(dir / "reliability.csv", bins_csv(reliability_bins(all_conf, all_y, bins)), rm);
        if (!reliability_only) {
            const auto agg_mode = mode == "pooled" ? AggregationMode::pooled : AggregationMode::equal_weight;
            const MetricReport report = aggregate(groups, agg_mode, bins);
            const MetricReport reports[] = {report};
            write_text(dir / "report.csv", report_csv(reports), rm);
            std::cout << report_csv(reports);
        }
        rm.config({{"bins", bins}, {"mode", mode}, {"subset", subset}, {"split", split}});
        rm.write(dir / kRunManifestFile);
    }
};

// ---------------------------------------------------------------------------
// hpo

struct HpoCmd {
    ProbeFlags probe;
    std::string base, blank, space_path, out, config_path;
    std::size_t trials = kDefaultTrials;
    std::uint64_t seed = 23;
    std::uint64_t budget = kParameterBudget;
    bool bce_only = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("hpo", "random search with budget rejection and median pruning");
        app->add_option("--base", base)->required();
        app->add_option("--blank", blank);
        app->add_option("--trials", trials);
        app->add_option("--seed", seed);
        app->add_option("--budget", budget, "maximum trainable parameters");
        app->add_option("--space", space_path, "JSON search-space override");
        app->add_flag("--bce-only", bce_only, "search without loss coefficients (beta = lambda = 0)");
        app->add_option("--config", config_path);
        app->add_option("--out", out, "output directory")->required();
        probe.add(app);
        app->callback([this, app] { run(*app); });
    }

    void run(const CLI::App& app) {
        RunManifest rm("hpo", g_argv);
        if (!config_path.empty()) rm.input(config_path);
        const Resolver r(app, cli::load_config(config_path));
        r.resolve("trials", trials);
        r.resolve("seed", seed);
        r.resolve("budget", budget);
        r.resolve("bce-only", bce_only);
        SearchOptions options;
        options.trials = trials;
        options.seed = seed;
        options.base = probe.resolve(r);
        if (!space_path.empty()) {
            rm.input(space_path);
            options.space = search_space_from_json(nlohmann::json::parse(detail::read_file_text(space_path)));
        }
        options.space.budget = budget;
        if (bce_only) options.space.include_loss_coeffs = false;
        require(!options.space.include_loss_coeffs || !blank.empty(), ErrorKind::validation,
                "searching loss coefficients trains the rank term, which needs paired input: pass --blank or --bce-only");
        const auto views = load_views(base, blank, nullptr, rm);
        const auto train_set = make_training_set(select_split(views.samples, Split::train), "training");
        const auto val_set = make_training_set(select_split(views.samples, Split::val), "validation");
        const SearchResult result = run_search(train_set, val_set, options);

        ensure_dir(out);
        const fs::path dir(out);
        write_text(dir / "trials.jsonl", trials_jsonl(result.trials), rm);
        write_probe(dir / "best_probe.bin", result.best_probe);
        rm.output(dir / "best_probe.bin");
        write_text(dir / "best.json", to_json(result.best()).dump(2) + "\n", rm);
        rm.config({{"trials", trials}, {"seed", seed}, {"space", to_json(options.space)}, {"base", to_json(options.base)}});
        rm.seeds({seed});
        rm.write(dir / kRunManifestFile);
        std::size_t pruned = 0, rejected = 0;
        for (const auto& t : result.trials) {
            pruned += t.status == TrialStatus::pruned;
            rejected += t.status == TrialStatus::rejected_budget;
        }
        std::cout << result.trials.size() << " trials (" << pruned << " pruned, " << rejected
                  << " over budget); best trial " << result.best_index << " objective " << *result.best().objective
                  << "\n";
    }
};

// ---------------------------------------------------------------------------
// ablate

struct AblateCmd {
    ProbeFlags probe;
    std::string base, blank, manifest_path, out, config_path, space_path;
    std::string variants = "full,no_brier,no_rank,bce_only";
    std::string seeds = "23,42,137,2024,3407";
    std::string mode = "fast";
    std::size_t trials = kDefaultTrials;
    std::size_t jobs = 1;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("ablate", "loss-component ablation with paired significance");
        app->add_option("--base", base)->required();
        app->add_option("--blank", blank)->required();
        app->add_option("--manifest", manifest_path, "enables the flip_swap=0 confidence summary");
        app->add_option("--variants", variants);
        app->add_option("--seeds", seeds);
        app->add_option("--mode", mode, "fast: one fixed config; search: a search per (variant, seed)")
            ->check(CLI::IsMember({"fast", "search"}));
        app->add_option("--trials", trials, "trials per search in search mode");
        app->add_option("--space", space_path);
        app->add_option("--jobs", jobs, "parallel (variant, seed) runs; GROUNDPROBE_THREADS caps it");
        app->add_option("--config", config_path);
        app->add_option("--out", out, "output directory")->required();
        probe.add(app);
        app->callback([this, app] { run(*app); });
    }

    void run(const CLI::App& app) {
        RunManifest rm("ablate", g_argv);
        if (!config_path.empty()) rm.input(config_path);
        const Resolver r(app, cli::load_config(config_path));
        r.resolve("variants", variants);
        r.resolve("seeds", seeds);
        r.resolve("mode", mode);
        r.resolve("trials", trials);
        r.resolve("jobs", jobs);
        AblationOptions options;
        options.variants = parse_list<Variant>(variants, [](const std::string& s) { return variant_from_string(s); });
        options.seeds = parse_list<std::uint64_t>(seeds, &to_u64);
        options.mode = mode == "fast" ? AblationMode::fast : AblationMode::search;
        options.base = probe.resolve(r);
        options.search.trials = trials;
        if (!space_path.empty()) {
            rm.input(space_path);
            options.search.space = search_space_from_json(nlohmann::json::parse(detail::read_file_text(space_path)));
        }
        options.jobs = detail::resolve_jobs(jobs);

        auto manifest = load_manifest(manifest_path, rm);
        const auto views = load_views(base, blank, manifest ? &*manifest : nullptr, rm);
        const auto data = make_ablation_data(select_split(views.samples, Split::train),
                                             select_split(views.samples, Split::val),
                                             select_split(views.samples, Split::test), std::move(manifest));
        const AblationResult result = run_ablation(data, options);

        ensure_dir(out);
        const fs::path dir(out);
        write_text(dir / "deltas.csv", delta_csv(result.variants), rm);
        write_text(dir / "runs.csv", runs_csv(result.runs), rm);
        nlohmann::json sig = nlohmann::json::array();
        for (const auto& s : result.significance) sig.push_back(to_json(s));
        write_text(dir / "significance.json", sig.dump(2) + "\n", rm);
        nlohmann::json dist = nlohmann::json::object();
        for (const auto& v : result.variants) {
            write_text(dir / (std::string("reliability_") + to_string(v.variant) + ".csv"), bins_csv(v.pooled_bins), rm);
            const auto& d = v.distribution;
            dist[to_string(v.variant)] = {{"mean_correct", d.mean_correct},
                                          {"mean_incorrect", d.mean_incorrect},
                                          {"separation", d.separation},
                                          {"frac_above_0.5", d.frac_above_half},
                                          {"frac_below_0.1", d.frac_below_tenth}};
        }
        write_text(dir / "confidence_distribution.json", dist.dump(2) + "\n", rm);
        rm.config({{"variants", variants}, {"mode", mode}, {"trials", trials}, {"base", to_json(options.base)}});
        rm.seeds(options.seeds);
        rm.write(dir / kRunManifestFile);
        std::cout << delta_csv(result.variants);
    }
};

// ---------------------------------------------------------------------------
// stats

struct StatsCmd {
    std::string in, column, a, b, out;
    std::size_t resamples = 0;
    std::uint64_t seed = 23;

    void emit(const nlohmann::json& j, RunManifest& rm, const std::string& name) {
        std::cout << j.dump(2) << "\n";
        if (out.empty()) return;
        ensure_dir(out);
        write_text(fs::path(out) / (name + ".json"), j.dump(2) + "\n", rm);
        rm.seeds({seed});
        rm.write(fs::path(out) / kRunManifestFile);
    }

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("stats", "significance tests");
        app->require_subcommand(1);

        auto* w = app->add_subcommand("wilcoxon", "two-sided signed-rank test on paired deltas");
        w->add_option("--in", in, "CSV of deltas")->required();
        w->add_option("--column", column, "column name (default: last column)");
        w->add_option("--out", out);
        w->callback([this] {
            RunManifest rm("stats wilcoxon", g_argv);
            rm.input(in);
            const auto deltas = cli::numeric_column(cli::read_csv(in), column, in);
            const auto res = wilcoxon_signed_rank(deltas);
            StatsReport rep{fs::path(in).filename().string(), column.empty() ? "delta" : column, 0.0, {}, {},
                            res.p_value, {}, deltas.size(), res.exact ? "exact" : "normal"};
            rep.mean_delta = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(deltas.size());
            auto j = to_json(rep);
            j["w_plus"] = res.w_plus;
            j["n_effective"] = res.n_effective;
            if (res.all_zero) j["all_zero"] = true;
            emit(j, rm, "wilcoxon");
        });

        auto* h = app->add_subcommand("holm", "Holm-Bonferroni adjustment");
        h->add_option("--in", in, "CSV of p-values")->required();
        h->add_option("--column", column);
        h->add_option("--out", out);
        h->callback([this] {
            RunManifest rm("stats holm", g_argv);
            rm.input(in);
            const auto p = cli::numeric_column(cli::read_csv(in), column, in);
            emit({{"p_raw", p}, {"p_holm", holm_bonferroni(p)}}, rm, "holm");
        });

        auto* bs = app->add_subcommand("bootstrap", "paired bootstrap on the Brier-score difference a - b");
        bs->add_option("--a", a, "CSV with confidence,label")->required();
        bs->add_option("--b", b, "CSV with confidence,label (same order)")->required();
        bs->add_option("--resamples", resamples, "default 2000");
        bs->add_option("--seed", seed);
        bs->add_option("--out", out);
        bs->callback([this] {
            RunManifest rm("stats bootstrap", g_argv);
            rm.input(a);
            rm.input(b);
            const auto ta = cli::read_csv(a), tb = cli::read_csv(b);
            const auto conf_a = cli::numeric_column(ta, "confidence", a, 0);
            const auto conf_b = cli::numeric_column(tb, "confidence", b, 0);
            const auto ya = cli::numeric_column(ta, "label", a, 1);
            const auto yb = cli::numeric_column(tb, "label", b, 1);
            require(ya == yb, ErrorKind::validation, "score files disagree on labels");
            std::vector<int> y(ya.begin(), ya.end());
            const auto res = paired_bootstrap_bs_delta(conf_a, conf_b, y, resamples ? resamples : 2000, seed);
            StatsReport rep{"a-b", "brier", res.mean_delta, res.ci_low, res.ci_high, {}, {}, y.size(), "paired_bootstrap"};
            auto j = to_json(rep);
            j["resamples"] = res.resamples;
            j["seed"] = res.seed;
            emit(j, rm, "bootstrap");
        });

        auto* cl = app->add_subcommand("cluster", "cluster bootstrap over per-cluster mean deltas");
        cl->add_option("--in", in, "CSV of per-cluster deltas")->required();
        cl->add_option("--column", column);
        cl->add_option("--resamples", resamples, "default 10000");
        cl->add_option("--seed", seed);
        cl->add_option("--out", out);
        cl->callback([this] {
            RunManifest rm("stats cluster", g_argv);
            rm.input(in);
            const auto deltas = cli::numeric_column(cli::read_csv(in), column, in);
            const auto res = cluster_bootstrap(deltas, resamples ? resamples : 10000, seed);
            StatsReport rep{fs::path(in).filename().string(), column.empty() ? "delta" : column, res.mean_delta, {}, {},
                            res.p_value, {}, deltas.size(), "cluster_bootstrap"};
            emit(to_json(rep), rm, "cluster");
        });
    }
};

// ---------------------------------------------------------------------------
// inspect

struct InspectCmd {
    std::vector<std::string> files;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("inspect", "print feature-file headers");
        app->add_option("files", files)->required();
        app->callback([this] {
            for (const auto& f : files) {
                const auto h = read_feature_header(f);
                const nlohmann::json j{{"path", f},
                                       {"version", h.version},
                                       {"d_h", h.d_h},
                                       {"count", h.count},
                                       {"bytes", fs::file_size(f)}};
                std::cout << j.dump() << "\n";
            }
        });
    }
};

}  // namespace

int main(int argc, char** argv) {
    g_argv.assign(argv, argv + argc);
    CLI::App app{"Confidence probes over paired base/blank hidden states"};
    app.set_version_flag("--version", cli::kToolVersion);
    app.require_subcommand(1);

    SynthCmd synth;
    TrainCmd train_cmd;
    EvalCmd eval, reliability;
    HpoCmd hpo;
    AblateCmd ablate;
    StatsCmd stats;
    InspectCmd inspect;
    synth.add(app);
    train_cmd.add(app);
    eval.add(app, "eval", false);
    reliability.add(app, "reliability", true);
    hpo.add(app);
    ablate.add(app);
    stats.add(app);
    inspect.add(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::exit_code::usage;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return cli::exit_code_for(e.kind());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error (format): " << e.what() << "\n";
        return cli::exit_code::format;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::exit_code::internal;
    }
    return cli::exit_code::ok;
}
