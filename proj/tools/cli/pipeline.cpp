#include "pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>

#include "run_config.hpp"
#include "crisp/errors.hpp"
#include "crisp/pgm.hpp"
#include "crisp/random.hpp"

namespace crisp::cli {

namespace {

std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string format_severity(double s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", s);
    return buf;
}

} // namespace

PredictionSource parse_prediction_source(const std::string& name) {
    if (name == "auto") return PredictionSource::automatic;
    if (name == "corrupt") return PredictionSource::corrupt;
    if (name == "model") return PredictionSource::model;
    if (name == "dir") return PredictionSource::directory;
    throw ConfigError("unknown prediction source '" + name + "'");
}

Method parse_method(const std::string& name) {
    if (name == "crisp") return Method::crisp;
    if (name == "edge") return Method::edge;
    if (name == "entropy") return Method::entropy;
    throw ConfigError("unknown method '" + name + "'");
}

PredictionSource resolve_source(PredictionSource source, Method method) {
    if (source != PredictionSource::automatic) return source;
    return method == Method::entropy ? PredictionSource::model : PredictionSource::corrupt;
}

std::string prediction_file_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "pred_%04zu.pgm", index);
    return buf;
}

std::string uncertainty_file_name(std::size_t index, const std::string& extension) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "unc_%04zu.%s", index, extension.c_str());
    return buf;
}

PredictionSet make_predictions(const Dataset& test, const PredictionOptions& options, const CrispModel* model) {
    PredictionSet out;
    out.masks.reserve(test.size());
    switch (options.source) {
    case PredictionSource::automatic:
        throw ConfigError("prediction source must be resolved before use");
    case PredictionSource::corrupt: {
        if (options.severities.empty()) throw ConfigError("severities must not be empty");
        if (options.modes.empty()) throw ConfigError("corruption modes must not be empty");
        Rng rng(options.seed);
        for (std::size_t i = 0; i < test.size(); ++i) {
            const double severity = options.severities[rng.below(options.severities.size())];
            CorruptionConfig config{severity, options.modes, derive_seed(options.seed, i)};
            auto result = corrupt_mask_detailed(test.samples[i].mask, config);
            out.origin.push_back("corrupt:" + std::string(to_string(result.mode)) + ":" +
                                 format_severity(severity));
            out.masks.push_back(std::move(result.mask));
        }
        break;
    }
    case PredictionSource::model:
        if (!model) throw ConfigError("prediction source 'model' needs a checkpoint");
        for (const auto& s : test.samples) {
            out.masks.push_back(segment(*model, s.image).argmax());
            out.origin.emplace_back("model");
        }
        break;
    case PredictionSource::directory:
        if (options.directory.empty()) throw ConfigError("prediction source 'dir' needs --pred-dir");
        for (std::size_t i = 0; i < test.size(); ++i) {
            const auto path = options.directory / prediction_file_name(i);
            Mask mask = gray_to_mask(load_pgm(path), test.num_classes);
            if (mask.height() != test.height || mask.width() != test.width) {
                throw DimensionError(path.string() + " does not match the test image size");
            }
            out.masks.push_back(std::move(mask));
            out.origin.push_back(path.filename().string());
        }
        break;
    }
    return out;
}

std::vector<Mask> load_masks(const std::vector<std::filesystem::path>& dataset_paths) {
    std::vector<Mask> masks;
    for (const auto& path : dataset_paths) {
        for (auto& s : load_dataset(path).samples) masks.push_back(std::move(s.mask));
    }
    return masks;
}

LatentBank cached_bank(const std::filesystem::path& checkpoint_path, const CrispModel& model,
                       const std::vector<std::filesystem::path>& mask_sources,
                       const std::filesystem::path& cache_dir, std::ostream& log) {
    if (mask_sources.empty()) throw ConfigError("at least one bank mask source is required");
    std::vector<std::string> parts{read_bytes(checkpoint_path)};
    for (const auto& p : mask_sources) parts.push_back(read_bytes(p));
    char name[48];
    std::snprintf(name, sizeof name, "bank_%016llx.bin", static_cast<unsigned long long>(fnv1a(parts)));
    const auto cache_file = cache_dir / name;

    if (!cache_dir.empty() && std::filesystem::exists(cache_file)) {
        try {
            LatentBank bank = load_bank(cache_file);
            if (bank.mask_latents.cols() == model.config.mask_latent_dim &&
                bank.joint_embeddings.cols() == model.config.joint_dim) {
                log << "bank: reused " << cache_file.string() << " (" << bank.size() << " masks)\n";
                return bank;
            }
        } catch (const FormatError&) {
        }
        log << "bank: ignoring unreadable cache " << cache_file.string() << "\n";
    }

    const std::vector<Mask> masks = load_masks(mask_sources);
    LatentBank bank = build_bank(masks, model);
    if (!cache_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(cache_dir, ec);
        const auto tmp = cache_file.string() + ".tmp";
        save_bank(bank, tmp);
        std::filesystem::rename(tmp, cache_file, ec);
        if (ec) throw InputError("cannot write bank cache " + cache_file.string() + ": " + ec.message());
        log << "bank: built " << bank.size() << " masks, cached at " << cache_file.string() << "\n";
    } else {
        log << "bank: built " << bank.size() << " masks\n";
    }
    return bank;
}

std::size_t resolve_retrieval_count(std::size_t requested, double ratio, std::size_t bank_size) {
    const std::size_t m = requested > 0 ? requested : default_retrieval_count(bank_size, ratio);
    if (m > bank_size) {
        throw ConfigError("M = " + std::to_string(m) + " exceeds the bank size " + std::to_string(bank_size));
    }
    return m;
}

std::vector<UncertaintyMap> estimate_maps(Method method, const Dataset& test, const std::vector<Mask>& predictions,
                                          const CrispModel* model, const CrispEstimator* estimator,
                                          const CrispOptions& options) {
    if (predictions.size() != test.size()) throw DimensionError("predictions and test set differ in size");
    std::vector<UncertaintyMap> maps;
    maps.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        switch (method) {
        case Method::crisp:
            if (!estimator) throw ConfigError("crisp needs a checkpoint and a bank");
            maps.push_back(estimator->estimate(test.samples[i].image, predictions[i], options));
            break;
        case Method::edge:
            maps.push_back(edge_uncertainty(predictions[i]));
            break;
        case Method::entropy:
            if (!model) throw ConfigError("entropy needs a checkpoint");
            maps.push_back(entropy_uncertainty(segment(*model, test.samples[i].image)));
            break;
        }
    }
    return maps;
}

} // namespace crisp::cli
