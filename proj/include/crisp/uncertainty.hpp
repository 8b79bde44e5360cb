#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crisp/maps.hpp"
#include "crisp/model.hpp"

namespace crisp {

/// Ground-truth latents: Z̄ (pre-projection, N×D_y) and H̄ (unit joint, N×D_h).
struct LatentBank {
    Matrix mask_latents;
    Matrix joint_embeddings;

    std::size_t size() const noexcept { return mask_latents.rows(); }
    bool operator==(const LatentBank&) const = default;
};

LatentBank build_bank(std::span<const Mask> masks, const CrispModel& model);

/// Throws ConfigError unless rows align and every H̄ row has unit norm.
void validate_bank(const LatentBank& bank);

struct Retrieval {
    std::vector<std::size_t> indices;
    std::vector<double> similarities;  // descending
};

/// Top-M rows of H̄·h_x; ties go to the lower index.
Retrieval retrieve(const JointEmbedding& query, const LatentBank& bank, std::size_t m);

/// max(5, round(0.03·N)), capped at N.
std::size_t default_retrieval_count(std::size_t bank_size, double ratio = 0.03);

struct VmfKernel {
    Vector mean_direction;
    double resultant_length = 0.0;  // r_m
    double concentration = 0.0;     // κ
    double bandwidth = 0.0;         // b
};

/// Maximum-likelihood mean direction, approximate κ, and Taylor's bandwidth.
VmfKernel fit_vmf(const LatentBank& bank);

/// b = κ^(−1/2) (40√π / N)^(1/5)
double taylor_bandwidth(double concentration, std::size_t sample_count);

/// exp((h_i·h_x − 1) / b)
double vmf_weight(std::span<const double> bank_embedding, std::span<const double> query, double bandwidth);

enum class WeightNormalization {
    retrieval_count,  // 1/M
    weight_sum,       // 1/Σw_i
};

struct CrispOptions {
    std::size_t retrieval_count = 5;
    WeightNormalization normalization = WeightNormalization::retrieval_count;
};

/// Holds a bank and its fitted kernel so repeated estimates skip the refit.
class CrispEstimator {
public:
    CrispEstimator(const CrispModel& model, LatentBank bank);

    const LatentBank& bank() const noexcept { return bank_; }
    const VmfKernel& kernel() const noexcept { return kernel_; }

    UncertaintyMap estimate(const Image& image, const Mask& prediction, const CrispOptions& options) const;

private:
    const CrispModel* model_;
    LatentBank bank_;
    VmfKernel kernel_;
};

UncertaintyMap crisp_uncertainty(const Image& image, const Mask& prediction, const CrispModel& model,
                                 const LatentBank& bank, const CrispOptions& options);

/// Weighted morphological bands around the predicted foreground boundary.
UncertaintyMap edge_uncertainty(const Mask& prediction);

/// Normalized per-pixel entropy −Σ p log p / log K.
UncertaintyMap entropy_uncertainty(const ProbMap& probabilities);

// Files --------------------------------------------------------------------

inline constexpr std::string_view kUncertaintyMagic = "CRSPUM01";
inline constexpr std::string_view kBankMagic = "CRSPBK01";

std::string encode_uncertainty_raw(const UncertaintyMap& map);
UncertaintyMap decode_uncertainty_raw(std::string_view bytes);
void save_uncertainty_raw(const UncertaintyMap& map, const std::filesystem::path& path);
UncertaintyMap load_uncertainty_raw(const std::filesystem::path& path);

std::string encode_bank(const LatentBank& bank);
LatentBank decode_bank(std::string_view bytes);
void save_bank(const LatentBank& bank, const std::filesystem::path& path);
LatentBank load_bank(const std::filesystem::path& path);

} // namespace crisp
