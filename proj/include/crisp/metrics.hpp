#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crisp/maps.hpp"

namespace crisp {

/// 2|P∩G| / (|P| + |G|) over the pooled foreground classes; 1 when both are empty.
double dice_score(const Mask& pred, const Mask& gt);

/// ΣU / number of foreground pixels of `pred`. Throws DegenerateInputError
/// when the prediction has no foreground.
double sample_uncertainty(const UncertaintyMap& u, const Mask& pred);

/// Per-pixel confidence c = 1 − u.
std::vector<double> confidence_from_uncertainty(const UncertaintyMap& u);

/// 1 where pred and gt labels differ.
std::vector<std::uint8_t> error_map(const Mask& pred, const Mask& gt);

/// Equal-width bins on [0, 1]; bin m covers (m/B, (m+1)/B] with 0 in the first bin.
std::size_t ece_bin_index(double confidence, std::size_t bins);

double ece(std::span<const double> confidences, std::span<const std::uint8_t> correct, std::size_t bins);

/// Mutual information in nats between the binned uncertainty and a binary error map.
double uncertainty_error_mi(const UncertaintyMap& u, std::span<const std::uint8_t> errors, std::size_t u_bins);

struct SampleRecord {
    double dice = 0.0;
    double sample_uncertainty = 0.0;
    std::size_t error_pixel_count = 0;
    double mi = 0.0;
    double ece = 0.0;
    /// False when the prediction foreground is empty; such records are
    /// excluded from the correlation.
    bool uncertainty_defined = true;
};

struct EvalConfig {
    std::size_t ece_bins = 10;
    std::size_t mi_bins = 32;
};

struct EvalReport {
    EvalConfig config;
    std::vector<SampleRecord> records;
    /// Empty when the correlation is undefined (fewer than 2 valid records or zero variance).
    std::optional<double> correlation;
    double ece = 0.0;
    double weighted_mi = 0.0;
    /// Every sample has zero erroneous pixels; weighted_mi is then reported as 0.
    bool all_perfect = false;
};

/// |pearson(dice, sample_uncertainty)| over records with a defined uncertainty.
double correlation_metric(std::span<const SampleRecord> records);

SampleRecord evaluate_sample(const Mask& gt, const Mask& pred, const UncertaintyMap& u, const EvalConfig& config);

EvalReport evaluate(std::span<const Mask> ground_truths, std::span<const Mask> predictions,
                    std::span<const UncertaintyMap> maps, const EvalConfig& config = {});

/// {config, per_sample: [...], aggregate: {...}} as a JSON document.
std::string report_to_json(const EvalReport& report);

/// index,dice,sample_uncertainty,error_pixels,mi,ece,uncertainty_defined
std::string records_to_csv(const EvalReport& report);

} // namespace crisp
