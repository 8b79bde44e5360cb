#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "crisp/data.hpp"
#include "crisp/model.hpp"

namespace crisp {

struct AdamConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    std::size_t batch_size = 32;
    AdamConfig adam;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
    double dice_weight = 1.0;
    double ce_weight = 1.0;
    /// Weight of the segment-adapter objective. It only reaches the adapter.
    double segment_weight = 1.0;

    void validate() const;
};

// Losses -------------------------------------------------------------------

struct ContrastiveLoss {
    double loss = 0.0;
    Matrix grad;  // dL/dS
};

/// Symmetric row/column softmax cross-entropy of S against the identity.
ContrastiveLoss contrastive_loss(const Matrix& similarity);

struct ReconstructionLoss {
    double loss = 0.0;
    double dice_term = 0.0;  // 1 − mean foreground soft-Dice
    double ce_term = 0.0;    // mean pixel cross-entropy
    Vector grad_logits;      // channel-major, same layout as `pred`
};

inline constexpr double kDiceSmooth = 1e-6;
inline constexpr double kLogClamp = 1e-12;

/// dice_weight·(1 − soft-Dice over foreground classes) + ce_weight·CE.
/// `pred` holds softmax probabilities; the gradient is wrt the logits that produced them.
ReconstructionLoss dice_ce_loss(const ProbMap& pred, const Mask& target, double dice_weight,
                                double ce_weight);

/// Which terms enter the objective; used to gradient-check each path alone.
struct LossTerms {
    bool contrastive = true;
    bool reconstruction = true;
    bool segmentation = true;
};

struct LossWeights {
    double dice_weight = 1.0;
    double ce_weight = 1.0;
    double segment_weight = 1.0;
};

struct BatchLoss {
    double total = 0.0;           // sum of the enabled terms
    double contrastive = 0.0;     // L_cont
    double reconstruction = 0.0;  // L_rec, mean over the batch
    double segmentation = 0.0;    // adapter objective, unweighted mean
    double diag_accuracy = 0.0;   // rows of S whose argmax is the diagonal
    CrispParams grads;            // filled only when gradients were requested
};

/// L = L_cont + L_rec (+ segment_weight · L_seg) over one batch with full backprop.
BatchLoss total_loss(std::span<const Sample> batch, const CrispModel& model, const LossWeights& weights,
                     const LossTerms& terms = {}, bool with_gradients = true);

// Optimizer ----------------------------------------------------------------

/// One Adam step on a flat tensor. `step` is 1-based. Decoupled weight decay
/// (θ ← θ − lr·wd·θ) is applied first when `decay` is set.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> first_moment,
                 std::span<double> second_moment, std::size_t step, const AdamConfig& config, bool decay);

struct AdamState {
    CrispParams first_moment;
    CrispParams second_moment;
    std::size_t step = 0;

    static AdamState for_params(const CrispParams& params);
};

/// Weight decay skips biases and the temperature.
void adam_step(CrispParams& params, const CrispParams& grads, AdamState& state, const AdamConfig& config);

// Training loop ------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_contrastive = 0.0;
    double val_reconstruction = 0.0;
    double val_diag_accuracy = 0.0;
    double train_diag_accuracy = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t selected_epoch = 0;

    const EpochRecord& selected() const { return epochs.at(selected_epoch); }
};

struct TrainResult {
    CrispModel model;
    TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Half-open [begin, end) batch ranges; a trailing singleton joins the previous batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t count, std::size_t batch_size);

struct SplitMetrics {
    double loss = 0.0;
    double contrastive = 0.0;
    double reconstruction = 0.0;
    double diag_accuracy = 0.0;
};

/// Fixed-order batched evaluation of L_cont + L_rec and diagonal accuracy.
SplitMetrics evaluate_split(std::span<const Sample> samples, const CrispModel& model,
                            const TrainConfig& config);

/// Shuffles with the training seed and holds out the last `val_fraction` for validation.
std::pair<Dataset, Dataset> split_train_val(const Dataset& dataset, const TrainConfig& config);

TrainResult train(const Dataset& dataset, const ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});
TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// epoch,train_loss,val_loss,val_cont,val_rec,diag_acc,train_diag_acc
void write_history_csv(const TrainHistory& history, std::ostream& out);

} // namespace crisp
