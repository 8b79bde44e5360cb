#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pipeline.hpp"
#include "run_config.hpp"
#include "crisp/data.hpp"
#include "crisp/errors.hpp"
#include "crisp/metrics.hpp"
#include "crisp/model.hpp"
#include "crisp/pgm.hpp"
#include "crisp/training.hpp"
#include "crisp/uncertainty.hpp"

namespace crisp::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

template <typename T>
std::string join(const std::vector<T>& values) {
    std::ostringstream out;
    for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i];
    return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.close();
    if (!out) throw InputError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
CLI::Option* add_list(CLI::App* app, const std::string& name, std::vector<T>& values, const std::string& help) {
    return app->add_option(name, values, help)->delimiter(',')->default_str(join(values));
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::size_t count = 200;
    std::size_t val_count = 50;
    std::size_t test_count = 100;
    std::size_t size = 32;
    std::size_t classes = 3;
    std::uint64_t seed = 0;
    double noise = 0.05;
    std::string out;
};

void add_gen_data(CLI::App* cmd, GenDataArgs& a) {
    cmd->add_option("--count", a.count, "training samples")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--val-count", a.val_count, "validation samples")->capture_default_str();
    cmd->add_option("--test-count", a.test_count, "test samples")->capture_default_str();
    cmd->add_option("--size", a.size, "image height and width")->capture_default_str()->check(CLI::Range(16, 1024));
    cmd->add_option("--classes", a.classes, "classes including background")
        ->capture_default_str()
        ->check(CLI::IsMember({2, 3}));
    cmd->add_option("--seed", a.seed, "base seed; splits use seed, seed+1, seed+2")->capture_default_str();
    cmd->add_option("--noise", a.noise, "Gaussian noise sigma")->capture_default_str()->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", a.out, "output directory")->required();
}

int run_gen_data(const GenDataArgs& a, const CLI::App& cmd, std::ostream& out) {
    StagedOutput staged(a.out);
    GeneratorOptions options;
    options.noise_sigma = a.noise;

    struct Split {
        const char* name;
        std::size_t count;
        std::uint64_t seed;
    };
    const Split splits[] = {{"train", a.count, a.seed}, {"val", a.val_count, a.seed + 1},
                            {"test", a.test_count, a.seed + 2}};

    nlohmann::ordered_json manifest;
    manifest["format"] = std::string(kDatasetMagic);
    manifest["height"] = a.size;
    manifest["width"] = a.size;
    manifest["num_classes"] = a.classes;
    manifest["noise_sigma"] = a.noise;
    manifest["splits"] = nlohmann::ordered_json::array();
    for (const auto& s : splits) {
        const Dataset ds = generate_dataset(s.count, a.size, a.size, a.classes, s.seed, options);
        const std::string file = std::string(s.name) + ".ds";
        save_dataset(ds, staged.file(file));
        if (!(load_dataset(staged.file(file)) == ds)) throw FormatError(file + " failed read-back validation");
        manifest["splits"].push_back({{"name", s.name}, {"file", file}, {"count", s.count}, {"seed", s.seed}});
        out << s.name << ": " << s.count << " samples, seed " << s.seed << "\n";
    }
    write_text(staged.file("manifest.json"), manifest.dump(2) + "\n");
    write_text(staged.file("config.txt"), resolved_config(cmd));
    staged.commit();
    return kExitOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::vector<std::string> train_paths;
    std::string val_path;
    std::string out;
    ModelConfig model;
    TrainConfig train;
    bool quiet = false;
};

void add_train(CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--train", a.train_paths, "training dataset file(s)")->required()->delimiter(',');
    cmd->add_option("--val", a.val_path, "validation dataset; otherwise split from --train");
    cmd->add_option("--out", a.out, "output directory")->required();
    cmd->add_option("--image-latent-dim", a.model.image_latent_dim)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--mask-latent-dim", a.model.mask_latent_dim)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--joint-dim", a.model.joint_dim)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--hidden", a.model.hidden)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--model-seed", a.model.init_seed, "weight initialization seed")->capture_default_str();
    cmd->add_option("--batch-size", a.train.batch_size)->capture_default_str()->check(CLI::Range(2, 1 << 20));
    cmd->add_option("--lr", a.train.adam.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--weight-decay", a.train.adam.weight_decay)->capture_default_str()->check(CLI::NonNegativeNumber);
    cmd->add_option("--beta1", a.train.adam.beta1)->capture_default_str()->check(CLI::Range(0.0, 0.999999));
    cmd->add_option("--beta2", a.train.adam.beta2)->capture_default_str()->check(CLI::Range(0.0, 0.999999));
    cmd->add_option("--adam-eps", a.train.adam.epsilon)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--max-epochs", a.train.max_epochs)->capture_default_str()->check(CLI::Range(1, 1000000));
    cmd->add_option("--patience", a.train.patience)->capture_default_str()->check(CLI::Range(1, 1000000));
    cmd->add_option("--val-fraction", a.train.val_fraction)->capture_default_str()->check(CLI::Range(0.0, 0.9));
    cmd->add_option("--seed", a.train.seed, "shuffling seed")->capture_default_str();
    cmd->add_option("--dice-weight", a.train.dice_weight)->capture_default_str()->check(CLI::NonNegativeNumber);
    cmd->add_option("--ce-weight", a.train.ce_weight)->capture_default_str()->check(CLI::NonNegativeNumber);
    cmd->add_option("--segment-weight", a.train.segment_weight)->capture_default_str()->check(CLI::NonNegativeNumber);
    cmd->add_flag("--quiet", a.quiet, "no per-epoch lines");
}

int run_train(TrainArgs a, const CLI::App& cmd, std::ostream& out) {
    std::vector<Dataset> parts;
    for (const auto& p : a.train_paths) parts.push_back(load_dataset(p));
    const Dataset train_set = concat(parts);
    a.model.height = train_set.height;
    a.model.width = train_set.width;
    a.model.num_classes = train_set.num_classes;
    a.model.validate();
    a.train.validate();

    StagedOutput staged(a.out);
    const EpochCallback log = [&](const EpochRecord& r) {
        if (a.quiet) return;
        out << "epoch " << r.epoch << " train_loss=" << fmt_short(r.train_loss)
            << " val_loss=" << fmt_short(r.val_loss) << " diag_acc=" << fmt_short(r.val_diag_accuracy) << "\n";
    };
    TrainResult result;
    if (a.val_path.empty()) {
        result = train(train_set, a.model, a.train, log);
    } else {
        result = train(train_set, load_dataset(a.val_path), a.model, a.train, log);
    }

    save_checkpoint(result.model, staged.file("model.ckpt"));
    if (!(load_checkpoint(staged.file("model.ckpt"), a.model) == result.model)) {
        throw FormatError("checkpoint failed read-back validation");
    }
    std::ofstream history(staged.file("history.csv"));
    write_history_csv(result.history, history);
    history.close();
    if (!history) throw InputError("cannot write history.csv");
    write_text(staged.file("config.txt"), resolved_config(cmd));
    staged.commit();

    const EpochRecord& best = result.history.selected();
    out << "selected epoch " << best.epoch << ": val_loss=" << fmt_short(best.val_loss)
        << " diag_accuracy train=" << fmt_short(best.train_diag_accuracy)
        << " val=" << fmt_short(best.val_diag_accuracy) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- estimate

struct PredictionArgs {
    std::string source = "auto";
    std::string directory;
    std::vector<double> severities{0, 1, 2, 3, 4};
    std::vector<std::string> modes{"dilate", "erode", "shift", "hole"};
    std::uint64_t seed = 0;

    PredictionOptions resolve(Method method) const {
        PredictionOptions o;
        o.source = resolve_source(parse_prediction_source(source), method);
        o.directory = directory;
        o.severities = severities;
        o.modes.clear();
        for (const auto& m : modes) o.modes.push_back(parse_corruption_mode(m));
        o.seed = seed;
        return o;
    }
};

struct BankArgs {
    std::string checkpoint;
    std::vector<std::string> bank_paths;
    std::string cache_dir;
    std::string normalization = "count";
};

void add_prediction_options(CLI::App* cmd, PredictionArgs& a) {
    cmd->add_option("--pred-source", a.source, "where predictions come from")
        ->capture_default_str()
        ->check(CLI::IsMember({"auto", "corrupt", "model", "dir"}));
    cmd->add_option("--pred-dir", a.directory, "directory of pred_NNNN.pgm files for --pred-source dir");
    add_list(cmd, "--severities", a.severities, "corruption severities drawn per sample");
    add_list(cmd, "--modes", a.modes, "corruption modes")->check(CLI::IsMember({"dilate", "erode", "shift", "hole"}));
    cmd->add_option("--corrupt-seed", a.seed, "corruption seed")->capture_default_str();
}

void add_bank_options(CLI::App* cmd, BankArgs& a) {
    cmd->add_option("--checkpoint", a.checkpoint, "model checkpoint");
    cmd->add_option("--bank", a.bank_paths, "dataset file(s) whose masks form the bank")->delimiter(',');
    cmd->add_option("--cache-dir", a.cache_dir, "bank cache directory (default: next to the checkpoint)");
    cmd->add_option("--normalization", a.normalization, "count (1/M) or weight-sum")
        ->capture_default_str()
        ->check(CLI::IsMember({"count", "weight-sum"}));
}

WeightNormalization parse_normalization(const std::string& name) {
    return name == "weight-sum" ? WeightNormalization::weight_sum : WeightNormalization::retrieval_count;
}

struct LoadedModel {
    std::optional<CrispModel> model;
    std::optional<CrispEstimator> estimator;
};

LoadedModel load_for(Method method, PredictionSource source, const BankArgs& b, const Dataset& test,
                     std::ostream& log) {
    LoadedModel out;
    const bool needs_model = method != Method::edge || source == PredictionSource::model;
    if (!needs_model) return out;
    if (b.checkpoint.empty()) throw ConfigError("--checkpoint is required for this method and prediction source");
    out.model = load_checkpoint(b.checkpoint);
    const ModelConfig& c = out.model->config;
    if (c.height != test.height || c.width != test.width || c.num_classes != test.num_classes) {
        throw DimensionError("checkpoint does not match the test set dimensions");
    }
    if (method == Method::crisp) {
        if (b.bank_paths.empty()) throw ConfigError("--bank is required for crisp");
        std::vector<fs::path> sources(b.bank_paths.begin(), b.bank_paths.end());
        const fs::path cache = b.cache_dir.empty() ? fs::path(b.checkpoint).parent_path() / "bank_cache"
                                                   : fs::path(b.cache_dir);
        out.estimator.emplace(*out.model, cached_bank(b.checkpoint, *out.model, sources, cache, log));
    }
    return out;
}

struct EstimateArgs {
    std::string method = "crisp";
    std::string test;
    std::string out;
    std::size_t m = 0;
    double m_ratio = 0.03;
    BankArgs bank;
    PredictionArgs pred;
};

void add_estimate(CLI::App* cmd, EstimateArgs& a) {
    cmd->add_option("--method", a.method)->capture_default_str()->check(CLI::IsMember({"crisp", "edge", "entropy"}));
    cmd->add_option("--test", a.test, "test dataset file")->required();
    cmd->add_option("--out", a.out, "output directory")->required();
    cmd->add_option("--m", a.m, "retrieved masks per query (0: use --m-ratio)")->capture_default_str();
    cmd->add_option("--m-ratio", a.m_ratio, "M as a fraction of the bank size")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    add_bank_options(cmd, a.bank);
    add_prediction_options(cmd, a.pred);
}

int run_estimate(const EstimateArgs& a, const CLI::App& cmd, std::ostream& out) {
    const Method method = parse_method(a.method);
    const PredictionOptions pred_options = a.pred.resolve(method);
    const Dataset test = load_dataset(a.test);
    LoadedModel loaded = load_for(method, pred_options.source, a.bank, test, out);

    CrispOptions crisp_options;
    crisp_options.normalization = parse_normalization(a.bank.normalization);
    if (loaded.estimator) {
        crisp_options.retrieval_count = resolve_retrieval_count(a.m, a.m_ratio, loaded.estimator->bank().size());
        out << "M = " << crisp_options.retrieval_count << " of " << loaded.estimator->bank().size() << "\n";
    }

    const CrispModel* model = loaded.model ? &*loaded.model : nullptr;
    const CrispEstimator* estimator = loaded.estimator ? &*loaded.estimator : nullptr;
    const PredictionSet preds = make_predictions(test, pred_options, model);
    const auto maps = estimate_maps(method, test, preds.masks, model, estimator, crisp_options);

    StagedOutput staged(a.out);
    std::ostringstream index;
    index << "index,origin\n";
    for (std::size_t i = 0; i < test.size(); ++i) {
        save_pgm(mask_to_gray(preds.masks[i]), staged.file(prediction_file_name(i)));
        save_pgm(uncertainty_to_gray(maps[i]), staged.file(uncertainty_file_name(i, "pgm")));
        save_uncertainty_raw(maps[i], staged.file(uncertainty_file_name(i, "raw")));
        if (!(load_uncertainty_raw(staged.file(uncertainty_file_name(i, "raw"))).values == maps[i].values) ||
            !(gray_to_mask(load_pgm(staged.file(prediction_file_name(i))), test.num_classes) == preds.masks[i])) {
            throw FormatError("sample " + std::to_string(i) + " failed read-back validation");
        }
        index << i << "," << preds.origin[i] << "\n";
    }
    write_text(staged.file("predictions.csv"), index.str());
    write_text(staged.file("config.txt"), resolved_config(cmd));
    staged.commit();
    out << "wrote " << test.size() << " " << a.method << " maps to " << a.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string test;
    std::string estimates;
    std::string out;
    EvalConfig eval;
};

void add_eval_options(CLI::App* cmd, EvalConfig& e) {
    cmd->add_option("--ece-bins", e.ece_bins)->capture_default_str()->check(CLI::Range(1, 100000));
    cmd->add_option("--mi-bins", e.mi_bins)->capture_default_str()->check(CLI::Range(1, 100000));
}

void add_evaluate(CLI::App* cmd, EvaluateArgs& a) {
    cmd->add_option("--test", a.test, "test dataset file with ground truth")->required();
    cmd->add_option("--estimates", a.estimates, "output directory of an estimate run")->required();
    cmd->add_option("--out", a.out, "output directory")->required();
    add_eval_options(cmd, a.eval);
}

std::string pixel_confidence_csv(std::span<const Mask> gts, std::span<const Mask> preds,
                                 std::span<const UncertaintyMap> maps) {
    std::ostringstream out;
    out << "confidence,correct\n";
    for (std::size_t i = 0; i < gts.size(); ++i) {
        const auto conf = confidence_from_uncertainty(maps[i]);
        const auto err = error_map(preds[i], gts[i]);
        for (std::size_t p = 0; p < conf.size(); ++p) out << fmt(conf[p]) << "," << (err[p] ? 0 : 1) << "\n";
    }
    return out.str();
}

int run_evaluate(const EvaluateArgs& a, const CLI::App& cmd, std::ostream& out) {
    const Dataset test = load_dataset(a.test);
    const fs::path dir = a.estimates;
    if (!fs::is_directory(dir)) throw InputError("estimates directory " + dir.string() + " does not exist");
    if (fs::exists(dir / prediction_file_name(test.size())) ||
        fs::exists(dir / uncertainty_file_name(test.size(), "raw"))) {
        throw DimensionError("estimates directory holds more samples than the test set");
    }
    std::vector<Mask> gts, preds;
    std::vector<UncertaintyMap> maps;
    for (std::size_t i = 0; i < test.size(); ++i) {
        gts.push_back(test.samples[i].mask);
        preds.push_back(gray_to_mask(load_pgm(dir / prediction_file_name(i)), test.num_classes));
        maps.push_back(load_uncertainty_raw(dir / uncertainty_file_name(i, "raw")));
    }
    const EvalReport report = evaluate(gts, preds, maps, a.eval);

    StagedOutput staged(a.out);
    write_text(staged.file("report.json"), report_to_json(report));
    write_text(staged.file("per_sample.csv"), records_to_csv(report));
    write_text(staged.file("pixel_confidence.csv"), pixel_confidence_csv(gts, preds, maps));
    write_text(staged.file("config.txt"), resolved_config(cmd));
    if (!nlohmann::json::accept(read_text(staged.file("report.json")))) throw FormatError("report.json is not valid JSON");
    staged.commit();

    out << "correlation=" << (report.correlation ? fmt_short(*report.correlation) : std::string("degenerate"))
        << " ece=" << fmt_short(report.ece) << " weighted_mi=" << fmt_short(report.weighted_mi) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- ablate-m

struct AblateArgs {
    std::string test;
    std::string out;
    std::vector<std::size_t> m_values{5, 10, 25};
    BankArgs bank;
    PredictionArgs pred;
    EvalConfig eval;
};

void add_ablate(CLI::App* cmd, AblateArgs& a) {
    cmd->add_option("--test", a.test, "test dataset file")->required();
    cmd->add_option("--out", a.out, "output directory")->required();
    add_list(cmd, "--m-list", a.m_values, "values of M to evaluate")->check(CLI::PositiveNumber);
    add_bank_options(cmd, a.bank);
    add_prediction_options(cmd, a.pred);
    add_eval_options(cmd, a.eval);
}

int run_ablate(const AblateArgs& a, const CLI::App& cmd, std::ostream& out) {
    const PredictionOptions pred_options = a.pred.resolve(Method::crisp);
    const Dataset test = load_dataset(a.test);
    LoadedModel loaded = load_for(Method::crisp, pred_options.source, a.bank, test, out);
    const std::size_t n = loaded.estimator->bank().size();
    for (std::size_t m : a.m_values) resolve_retrieval_count(m, 0.0, n);

    const PredictionSet preds = make_predictions(test, pred_options, &*loaded.model);
    std::vector<Mask> gts;
    for (const auto& s : test.samples) gts.push_back(s.mask);

    std::ostringstream csv;
    csv << "m,correlation,ece,weighted_mi\n";
    for (std::size_t m : a.m_values) {
        CrispOptions options{m, parse_normalization(a.bank.normalization)};
        const auto maps = estimate_maps(Method::crisp, test, preds.masks, &*loaded.model, &*loaded.estimator, options);
        const EvalReport report = evaluate(gts, preds.masks, maps, a.eval);
        csv << m << "," << (report.correlation ? fmt(*report.correlation) : std::string("NA")) << ","
            << fmt(report.ece) << "," << fmt(report.weighted_mi) << "\n";
        out << "M=" << m << " correlation="
            << (report.correlation ? fmt_short(*report.correlation) : std::string("degenerate"))
            << " ece=" << fmt_short(report.ece) << " weighted_mi=" << fmt_short(report.weighted_mi) << "\n";
    }

    StagedOutput staged(a.out);
    write_text(staged.file("ablation.csv"), csv.str());
    write_text(staged.file("config.txt"), resolved_config(cmd));
    staged.commit();
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Contrastive uncertainty estimation for segmentation masks", "crisp"};
    app.require_subcommand(1, 1);

    GenDataArgs gen;
    TrainArgs tr;
    EstimateArgs est;
    EvaluateArgs ev;
    AblateArgs abl;
    std::string config_path;

    struct Entry {
        CLI::App* app;
        std::function<int()> run;
    };
    std::vector<Entry> commands;
    auto add = [&](const char* name, const char* help, auto&& define, auto&& runner) {
        CLI::App* cmd = app.add_subcommand(name, help);
        cmd->add_option("--config", config_path, "file of key=value settings; flags override it");
        define(cmd);
        commands.push_back({cmd, [cmd, runner] { return runner(*cmd); }});
    };
    add("gen-data", "generate train/val/test synthetic datasets",
        [&](CLI::App* c) { add_gen_data(c, gen); }, [&](const CLI::App& c) { return run_gen_data(gen, c, out); });
    add("train", "train the joint embedding model",
        [&](CLI::App* c) { add_train(c, tr); }, [&](const CLI::App& c) { return run_train(tr, c, out); });
    add("estimate", "predict masks and uncertainty maps for a test set",
        [&](CLI::App* c) { add_estimate(c, est); }, [&](const CLI::App& c) { return run_estimate(est, c, out); });
    add("evaluate", "score uncertainty maps against ground truth",
        [&](CLI::App* c) { add_evaluate(c, ev); }, [&](const CLI::App& c) { return run_evaluate(ev, c, out); });
    add("ablate-m", "sweep the number of retrieved masks",
        [&](CLI::App* c) { add_ablate(c, abl); }, [&](const CLI::App& c) { return run_ablate(abl, c, out); });

    try {
        std::vector<std::string> expanded = expand_config(args);
        std::reverse(expanded.begin(), expanded.end());
        app.parse(expanded);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        for (const auto& c : commands) {
            if (c.app->parsed()) return c.run();
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace crisp::cli
