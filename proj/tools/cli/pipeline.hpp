#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "crisp/data.hpp"
#include "crisp/model.hpp"
#include "crisp/uncertainty.hpp"

namespace crisp::cli {

enum class PredictionSource { automatic, corrupt, model, directory };
enum class Method { crisp, edge, entropy };

PredictionSource parse_prediction_source(const std::string& name);
Method parse_method(const std::string& name);

struct PredictionOptions {
    PredictionSource source = PredictionSource::automatic;
    std::filesystem::path directory;
    std::vector<double> severities{0, 1, 2, 3, 4};
    std::vector<CorruptionMode> modes{CorruptionMode::dilate, CorruptionMode::erode, CorruptionMode::shift,
                                      CorruptionMode::hole};
    std::uint64_t seed = 0;
};

struct PredictionSet {
    std::vector<Mask> masks;
    std::vector<std::string> origin;  // per-sample description for predictions.csv
};

/// `automatic` resolves to `model` for entropy and `corrupt` otherwise.
PredictionSource resolve_source(PredictionSource source, Method method);

/// Corrupted predictions draw sample i's severity from Rng(seed) in order and
/// corrupt with derive_seed(seed, i).
PredictionSet make_predictions(const Dataset& test, const PredictionOptions& options, const CrispModel* model);

std::string prediction_file_name(std::size_t index);
std::string uncertainty_file_name(std::size_t index, const std::string& extension);

std::vector<Mask> load_masks(const std::vector<std::filesystem::path>& dataset_paths);

/// Bank for the given checkpoint and mask sources, reused from `cache_dir`
/// when a file with the same content hash exists there.
LatentBank cached_bank(const std::filesystem::path& checkpoint_path, const CrispModel& model,
                       const std::vector<std::filesystem::path>& mask_sources,
                       const std::filesystem::path& cache_dir, std::ostream& log);

std::size_t resolve_retrieval_count(std::size_t requested, double ratio, std::size_t bank_size);

std::vector<UncertaintyMap> estimate_maps(Method method, const Dataset& test, const std::vector<Mask>& predictions,
                                          const CrispModel* model, const CrispEstimator* estimator,
                                          const CrispOptions& options);

} // namespace crisp::cli
