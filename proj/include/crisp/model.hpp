#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crisp/maps.hpp"
#include "crisp/numerics.hpp"

namespace crisp {

struct ModelConfig {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t num_classes = 3;
    std::size_t image_latent_dim = 32;  // D_x
    std::size_t mask_latent_dim = 32;   // D_y
    std::size_t joint_dim = 16;         // D_h
    std::size_t hidden = 128;
    std::uint64_t init_seed = 0;

    std::size_t pixels() const noexcept { return height * width; }
    std::size_t mask_inputs() const noexcept { return num_classes * height * width; }

    /// Throws ConfigError when dimensions are inconsistent.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

/// Affine layer y = W x + b with W stored out×in.
struct Dense {
    Matrix weight;
    Vector bias;

    std::size_t inputs() const noexcept { return weight.cols(); }
    std::size_t outputs() const noexcept { return weight.rows(); }
    bool operator==(const Dense&) const = default;
};

/// tanh(W₁x + b₁) followed by an affine output layer.
struct TwoLayerNet {
    Dense hidden;
    Dense output;

    bool operator==(const TwoLayerNet&) const = default;
};

/// Activations kept for backpropagation, one row per batch element.
struct TwoLayerCache {
    Matrix hidden;  // post-tanh
};

/// Batched forward pass over the rows of `inputs`.
Matrix forward(const TwoLayerNet& net, const Matrix& inputs, TwoLayerCache* cache = nullptr);
Vector forward(const TwoLayerNet& net, std::span<const double> input);

/// Backpropagates `grad_outputs` (one row per batch element). Parameter
/// gradients are accumulated into `grads` when non-null; returns the
/// gradient wrt the inputs when `want_input_grad` is set (empty otherwise).
Matrix backward(const TwoLayerNet& net, const Matrix& inputs, const TwoLayerCache& cache,
                const Matrix& grad_outputs, TwoLayerNet* grads, bool want_input_grad);

/// Every learnable tensor of the model. Also used as the gradient and Adam
/// moment container, since those share its shapes.
struct CrispParams {
    TwoLayerNet image_encoder;  // P_θ: H·W → hidden → D_x
    TwoLayerNet mask_encoder;   // P_φ: K·H·W → hidden → D_y
    Matrix image_projection;    // W_x: D_h × D_x
    Matrix mask_projection;     // W_y: D_h × D_y
    TwoLayerNet decoder;        // Q_ψ: D_y → hidden → K·H·W logits
    Dense segment_adapter;      // D_x → D_y, used by segment()
    double log_temperature = 0.0;

    /// Same shapes, all zeros.
    CrispParams zeros_like() const;
    bool operator==(const CrispParams&) const = default;
};

/// Named view of one parameter tensor.
struct ParamView {
    std::string_view name;
    std::span<double> values;
    bool decays;  // false for biases and the temperature
};

struct ConstParamView {
    std::string_view name;
    std::span<const double> values;
    bool decays;
};

/// Tensors in declaration order (the checkpoint order).
std::vector<ParamView> parameter_views(CrispParams& params);
std::vector<ConstParamView> parameter_views(const CrispParams& params);
std::size_t parameter_count(const CrispParams& params);

struct CrispModel {
    ModelConfig config;
    CrispParams params;

    bool operator==(const CrispModel&) const = default;
};

inline constexpr double kMaxTemperatureScale = 100.0;
inline constexpr double kInitialTemperature = 0.07;

/// exp(log_temperature) clamped to (0, 100].
double temperature_scale(double log_temperature);

CrispModel init_model(const ModelConfig& config);

enum class Side { image, mask };

/// Unit-norm point of the joint latent space.
struct JointEmbedding {
    Vector h;
};

Vector encode_image(const CrispModel& model, const Image& image);
Vector encode_mask(const CrispModel& model, const Mask& mask);

/// W·z / ‖W·z‖ for the projection of `side`.
JointEmbedding project(const CrispModel& model, std::span<const double> z, Side side);

/// S[i][j] = (h_x_i · h_y_j) · exp(τ)
Matrix similarity_matrix(std::span<const JointEmbedding> image_embeddings,
                         std::span<const JointEmbedding> mask_embeddings, double log_temperature);

/// Decoder logits, channel-major K×H×W.
Vector decode_logits(const CrispModel& model, std::span<const double> mask_latent);

/// Per-pixel softmax over the class channels of channel-major logits.
ProbMap pixel_softmax(std::size_t num_classes, std::size_t height, std::size_t width,
                      std::span<const double> logits);

ProbMap decode(const CrispModel& model, std::span<const double> mask_latent);

/// decode(adapter(encode_image(image))): the built-in segmentation route.
ProbMap segment(const CrispModel& model, const Image& image);

// Checkpoint ---------------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic = "CRSPMD01";

std::string encode_checkpoint(const CrispModel& model);
CrispModel decode_checkpoint(std::string_view bytes);

void save_checkpoint(const CrispModel& model, const std::filesystem::path& path);
/// When `expected` is given, a differing stored configuration is rejected.
CrispModel load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

} // namespace crisp
