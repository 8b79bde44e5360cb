#include "crisp/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "crisp/errors.hpp"
#include "crisp/random.hpp"

namespace crisp {

namespace {

// Gradient of h = u/‖u‖ wrt u, applied to dL/dh.
Vector normalize_backward(std::span<const double> unit, double norm_value, std::span<const double> grad_unit) {
    const double proj = dot(unit, grad_unit);
    Vector g(unit.size());
    for (std::size_t i = 0; i < unit.size(); ++i) g[i] = (grad_unit[i] - unit[i] * proj) / norm_value;
    return g;
}

void add_into(Vector& acc, std::span<const double> v, double scale = 1.0) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * v[i];
}

void add_into_row(Matrix& m, std::size_t r, std::span<const double> v) {
    auto row = m.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] += v[i];
}

double diag_accuracy_of(const Matrix& s) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < s.rows(); ++i) {
        const auto row = s.row(i);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        hits += best == i ? 1 : 0;
    }
    return s.rows() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(s.rows());
}

struct DecoderPass {
    double mean_loss = 0.0;
    Matrix grad_latents;  // empty without gradients
};

// Mean Dice+CE objective of decoding every row of `latents` against `targets`.
// The latent gradient carries the factor `scale`; decoder parameter gradients
// are accumulated only when `decoder_grads` is non-null.
DecoderPass decoder_objective(const CrispModel& model, const Matrix& latents, std::span<const Sample> targets,
                              const LossWeights& w, double scale, TwoLayerNet* decoder_grads, bool with_gradients) {
    const auto& c = model.config;
    const std::size_t b = latents.rows();
    const double inv_b = 1.0 / static_cast<double>(b);
    TwoLayerCache cache;
    const Matrix logits = forward(model.params.decoder, latents, &cache);
    DecoderPass out;
    Matrix grad_logits(with_gradients ? b : 0, with_gradients ? logits.cols() : 0);
    for (std::size_t i = 0; i < b; ++i) {
        const ProbMap probs = pixel_softmax(c.num_classes, c.height, c.width, logits.row(i));
        const ReconstructionLoss rec = dice_ce_loss(probs, targets[i].mask, w.dice_weight, w.ce_weight);
        out.mean_loss += rec.loss * inv_b;
        if (with_gradients) {
            auto g = grad_logits.row(i);
            for (std::size_t j = 0; j < g.size(); ++j) g[j] = rec.grad_logits[j] * scale * inv_b;
        }
    }
    if (with_gradients) {
        out.grad_latents = backward(model.params.decoder, latents, cache, grad_logits, decoder_grads, true);
    }
    return out;
}

} // namespace

void TrainConfig::validate() const {
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (!(adam.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
    if (!(adam.weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
    if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0) || !(adam.beta2 > 0.0 && adam.beta2 < 1.0)) {
        throw ConfigError("train: Adam betas must lie in (0, 1)");
    }
    if (!(adam.epsilon > 0.0)) throw ConfigError("train: adam epsilon must be > 0");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train: val_fraction must lie in (0, 1)");
    if (dice_weight < 0.0 || ce_weight < 0.0 || segment_weight < 0.0) {
        throw ConfigError("train: loss weights must be >= 0");
    }
}

ContrastiveLoss contrastive_loss(const Matrix& s) {
    if (s.rows() != s.cols()) throw DimensionError("contrastive_loss: similarity matrix must be square");
    const std::size_t b = s.rows();
    ContrastiveLoss out{0.0, Matrix(b, b)};
    if (b == 0) return out;
    const double inv_b = 1.0 / static_cast<double>(b);

    // Rows: image i against all masks.
    for (std::size_t i = 0; i < b; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b; ++j) mx = std::max(mx, s(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < b; ++j) sum += std::exp(s(i, j) - mx);
        const double lse = mx + std::log(sum);
        out.loss += -(s(i, i) - lse) * inv_b * 0.5;
        for (std::size_t j = 0; j < b; ++j) {
            const double p = std::exp(s(i, j) - lse);
            out.grad(i, j) += 0.5 * inv_b * (p - (i == j ? 1.0 : 0.0));
        }
    }
    // Columns: mask j against all images.
    for (std::size_t j = 0; j < b; ++j) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < b; ++i) mx = std::max(mx, s(i, j));
        double sum = 0.0;
        for (std::size_t i = 0; i < b; ++i) sum += std::exp(s(i, j) - mx);
        const double lse = mx + std::log(sum);
        out.loss += -(s(j, j) - lse) * inv_b * 0.5;
        for (std::size_t i = 0; i < b; ++i) {
            const double p = std::exp(s(i, j) - lse);
            out.grad(i, j) += 0.5 * inv_b * (p - (i == j ? 1.0 : 0.0));
        }
    }
    return out;
}

ReconstructionLoss dice_ce_loss(const ProbMap& pred, const Mask& target, double dice_weight, double ce_weight) {
    if (pred.height != target.height() || pred.width != target.width() ||
        pred.num_classes != target.num_classes() ||
        pred.values.size() != pred.num_classes * pred.pixel_count()) {
        throw DimensionError("dice_ce_loss: prediction and target shapes differ");
    }
    const std::size_t n = pred.pixel_count();
    const std::size_t k_count = pred.num_classes;
    const auto& p = pred.values;
    Vector grad_p(p.size(), 0.0);
    ReconstructionLoss out;

    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t px = 0; px < n; ++px) {
        const std::size_t k = target.label(px);
        const double prob = p[k * n + px];
        if (prob > kLogClamp) {
            out.ce_term -= std::log(prob) * inv_n;
            grad_p[k * n + px] -= ce_weight * inv_n / prob;
        } else {
            out.ce_term -= std::log(kLogClamp) * inv_n;
        }
    }

    if (k_count > 1) {
        const double inv_fg = 1.0 / static_cast<double>(k_count - 1);
        double dice_sum = 0.0;
        for (std::size_t k = 1; k < k_count; ++k) {
            double inter = 0.0, psum = 0.0, gsum = 0.0;
            for (std::size_t px = 0; px < n; ++px) {
                const double g = target.label(px) == k ? 1.0 : 0.0;
                inter += p[k * n + px] * g;
                psum += p[k * n + px];
                gsum += g;
            }
            const double num = 2.0 * inter + kDiceSmooth;
            const double den = psum + gsum + kDiceSmooth;
            dice_sum += num / den;
            for (std::size_t px = 0; px < n; ++px) {
                const double g = target.label(px) == k ? 1.0 : 0.0;
                const double d_dice = (2.0 * g * den - num) / (den * den);
                grad_p[k * n + px] -= dice_weight * inv_fg * d_dice;
            }
        }
        out.dice_term = 1.0 - dice_sum * inv_fg;
    }
    out.loss = dice_weight * out.dice_term + ce_weight * out.ce_term;

    // Softmax Jacobian per pixel: dz_k = p_k (g_k − Σ_j p_j g_j).
    out.grad_logits.assign(p.size(), 0.0);
    for (std::size_t px = 0; px < n; ++px) {
        double inner = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) inner += p[k * n + px] * grad_p[k * n + px];
        for (std::size_t k = 0; k < k_count; ++k) {
            out.grad_logits[k * n + px] = p[k * n + px] * (grad_p[k * n + px] - inner);
        }
    }
    return out;
}

BatchLoss total_loss(std::span<const Sample> batch, const CrispModel& model, const LossWeights& weights,
                     const LossTerms& terms, bool with_gradients) {
    const std::size_t b = batch.size();
    if (b == 0) throw InputError("total_loss: empty batch");
    const auto& cfg = model.config;
    const auto& prm = model.params;
    BatchLoss out;
    if (with_gradients) out.grads = prm.zeros_like();

    Matrix images(b, cfg.pixels());
    Matrix masks(b, cfg.mask_inputs());
    for (std::size_t i = 0; i < b; ++i) {
        const Sample& s = batch[i];
        if (s.image.height != cfg.height || s.image.width != cfg.width ||
            s.image.pixels.size() != cfg.pixels()) {
            throw DimensionError("total_loss: sample image shape does not match the model");
        }
        if (s.mask.num_classes() != cfg.num_classes || s.mask.height() != cfg.height ||
            s.mask.width() != cfg.width) {
            throw DimensionError("total_loss: sample mask shape does not match the model");
        }
        std::copy(s.image.pixels.begin(), s.image.pixels.end(), images.row(i).begin());
        const Vector onehot = s.mask.one_hot();
        std::copy(onehot.begin(), onehot.end(), masks.row(i).begin());
    }

    const bool need_image_latents = terms.contrastive || terms.segmentation;
    const bool need_mask_latents = terms.contrastive || terms.reconstruction;
    TwoLayerCache image_cache, mask_cache;
    const Matrix image_latents = need_image_latents ? forward(prm.image_encoder, images, &image_cache) : Matrix();
    const Matrix mask_latents = need_mask_latents ? forward(prm.mask_encoder, masks, &mask_cache) : Matrix();

    Matrix grad_image_latents(b, cfg.image_latent_dim);
    Matrix grad_mask_latents(b, cfg.mask_latent_dim);

    if (terms.contrastive) {
        std::vector<JointEmbedding> hx(b), hy(b);
        std::vector<double> image_norms(b), mask_norms(b);
        for (std::size_t i = 0; i < b; ++i) {
            std::tie(hx[i].h, image_norms[i]) = l2_normalize(matvec(prm.image_projection, image_latents.row(i)));
            std::tie(hy[i].h, mask_norms[i]) = l2_normalize(matvec(prm.mask_projection, mask_latents.row(i)));
        }
        const Matrix s = similarity_matrix(hx, hy, prm.log_temperature);
        const ContrastiveLoss cl = contrastive_loss(s);
        out.contrastive = cl.loss;
        out.diag_accuracy = diag_accuracy_of(s);
        out.total += cl.loss;

        if (with_gradients) {
            const double scale = temperature_scale(prm.log_temperature);
            const bool clamped = std::exp(prm.log_temperature) >= kMaxTemperatureScale;
            double grad_scale = 0.0;
            std::vector<Vector> gx(b, Vector(cfg.joint_dim, 0.0));
            std::vector<Vector> gy(b, Vector(cfg.joint_dim, 0.0));
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t j = 0; j < b; ++j) {
                    const double g = cl.grad(i, j);
                    grad_scale += g * s(i, j) / scale;
                    add_into(gx[i], hy[j].h, g * scale);
                    add_into(gy[j], hx[i].h, g * scale);
                }
            }
            out.grads.log_temperature += clamped ? 0.0 : grad_scale * scale;
            for (std::size_t i = 0; i < b; ++i) {
                const Vector du_x = normalize_backward(hx[i].h, image_norms[i], gx[i]);
                add_outer(out.grads.image_projection, du_x, image_latents.row(i));
                const Vector dzx = matvec_transposed(prm.image_projection, du_x);
                std::copy(dzx.begin(), dzx.end(), grad_image_latents.row(i).begin());
                const Vector du_y = normalize_backward(hy[i].h, mask_norms[i], gy[i]);
                add_outer(out.grads.mask_projection, du_y, mask_latents.row(i));
                const Vector dzy = matvec_transposed(prm.mask_projection, du_y);
                std::copy(dzy.begin(), dzy.end(), grad_mask_latents.row(i).begin());
            }
        }
    }

    if (terms.reconstruction) {
        const DecoderPass rec = decoder_objective(model, mask_latents, batch, weights, 1.0,
                                                  with_gradients ? &out.grads.decoder : nullptr, with_gradients);
        out.reconstruction = rec.mean_loss;
        out.total += rec.mean_loss;
        if (with_gradients) {
            for (std::size_t j = 0; j < grad_mask_latents.size(); ++j) {
                grad_mask_latents.values()[j] += rec.grad_latents.values()[j];
            }
        }
    }

    if (terms.segmentation) {
        // The image latents are constants here: only the adapter learns from this term.
        const Dense& adapter = prm.segment_adapter;
        Matrix adapted = matmul_transposed(image_latents, adapter.weight);
        for (std::size_t i = 0; i < b; ++i) add_into_row(adapted, i, adapter.bias);
        const DecoderPass seg = decoder_objective(model, adapted, batch, weights, weights.segment_weight,
                                                  nullptr, with_gradients);
        out.segmentation = seg.mean_loss;
        out.total += weights.segment_weight * seg.mean_loss;
        if (with_gradients) {
            add_transposed_product(out.grads.segment_adapter.weight, seg.grad_latents, image_latents);
            for (std::size_t i = 0; i < b; ++i) add_into(out.grads.segment_adapter.bias, seg.grad_latents.row(i));
        }
    }

    if (with_gradients) {
        if (terms.contrastive) {
            backward(prm.image_encoder, images, image_cache, grad_image_latents, &out.grads.image_encoder, false);
        }
        if (need_mask_latents) {
            backward(prm.mask_encoder, masks, mask_cache, grad_mask_latents, &out.grads.mask_encoder, false);
        }
    }
    return out;
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::size_t step, const AdamConfig& c, bool decay) {
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
        throw DimensionError("adam_update: tensor sizes differ");
    }
    if (step < 1) throw ConfigError("adam_update: step is 1-based");
    const double t = static_cast<double>(step);
    const double c1 = 1.0 - std::pow(c.beta1, t);
    const double c2 = 1.0 - std::pow(c.beta2, t);
    const double shrink = decay ? 1.0 - c.learning_rate * c.weight_decay : 1.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] *= shrink;
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grads[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

AdamState AdamState::for_params(const CrispParams& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(CrispParams& params, const CrispParams& grads, AdamState& state, const AdamConfig& config) {
    auto p = parameter_views(params);
    const auto g = parameter_views(grads);
    auto m = parameter_views(state.first_moment);
    auto v = parameter_views(state.second_moment);
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
        throw DimensionError("adam_step: parameter sets differ");
    }
    ++state.step;
    for (std::size_t i = 0; i < p.size(); ++i) {
        adam_update(p[i].values, g[i].values, m[i].values, v[i].values, state.step, config, p[i].decays);
    }
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t count, std::size_t batch_size) {
    if (batch_size == 0) throw ConfigError("batch_ranges: batch_size must be > 0");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t start = 0; start < count; start += batch_size) {
        out.emplace_back(start, std::min(count, start + batch_size));
    }
    if (out.size() > 1 && out.back().second - out.back().first == 1) {
        out.pop_back();
        out.back().second = count;
    }
    return out;
}

SplitMetrics evaluate_split(std::span<const Sample> samples, const CrispModel& model, const TrainConfig& config) {
    SplitMetrics m;
    if (samples.empty()) return m;
    const LossWeights w{config.dice_weight, config.ce_weight, config.segment_weight};
    const LossTerms terms{true, true, false};
    double weight_sum = 0.0;
    for (auto [begin, end] : batch_ranges(samples.size(), config.batch_size)) {
        const BatchLoss bl = total_loss(samples.subspan(begin, end - begin), model, w, terms, false);
        const double wgt = static_cast<double>(end - begin);
        m.contrastive += bl.contrastive * wgt;
        m.reconstruction += bl.reconstruction * wgt;
        m.diag_accuracy += bl.diag_accuracy * wgt;
        weight_sum += wgt;
    }
    m.contrastive /= weight_sum;
    m.reconstruction /= weight_sum;
    m.diag_accuracy /= weight_sum;
    m.loss = m.contrastive + m.reconstruction;
    return m;
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& dataset, const TrainConfig& config) {
    config.validate();
    const std::size_t n = dataset.size();
    const auto val_count = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n)));
    if (val_count < 1 || n - val_count < 2) {
        throw ConfigError("train: " + std::to_string(n) + " samples cannot be split into training (>= 2) and "
                          "validation (>= 1) sets with val_fraction " + std::to_string(config.val_fraction));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, 0x5B11));
    rng.shuffle(order);

    Dataset train_set{dataset.height, dataset.width, dataset.num_classes, dataset.seed, {}};
    Dataset val_set = train_set;
    for (std::size_t i = 0; i < n; ++i) {
        (i < n - val_count ? train_set : val_set).samples.push_back(dataset.samples[order[i]]);
    }
    return {std::move(train_set), std::move(val_set)};
}

TrainResult train(const Dataset& dataset, const ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    auto [train_set, val_set] = split_train_val(dataset, config);
    return train(train_set, val_set, model_config, config, on_epoch);
}

TrainResult train(const Dataset& train_set, const Dataset& val_set, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    model_config.validate();
    if (train_set.size() < 2) throw ConfigError("train: need at least 2 training samples");
    if (val_set.size() < 1) throw ConfigError("train: need at least 1 validation sample");
    for (const Dataset* d : {&train_set, &val_set}) {
        if (d->height != model_config.height || d->width != model_config.width ||
            d->num_classes != model_config.num_classes) {
            throw ConfigError("train: dataset shape does not match the model configuration");
        }
    }

    CrispModel model = init_model(model_config);
    AdamState adam = AdamState::for_params(model.params);
    const LossWeights weights{config.dice_weight, config.ce_weight, config.segment_weight};

    TrainResult result{model, {}};
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Sample> batch;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        Rng rng(derive_seed(config.seed, epoch + 1));
        rng.shuffle(order);

        double loss_sum = 0.0;
        double loss_weight = 0.0;
        for (auto [begin, end] : batch_ranges(order.size(), config.batch_size)) {
            batch.clear();
            for (std::size_t i = begin; i < end; ++i) batch.push_back(train_set.samples[order[i]]);
            BatchLoss bl = total_loss(batch, model, weights);
            if (!std::isfinite(bl.total)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
            }
            adam_step(model.params, bl.grads, adam, config.adam);
            loss_sum += (bl.contrastive + bl.reconstruction) * static_cast<double>(end - begin);
            loss_weight += static_cast<double>(end - begin);
        }

        const SplitMetrics val = evaluate_split(val_set.samples, model, config);
        const SplitMetrics tr = evaluate_split(train_set.samples, model, config);
        EpochRecord rec{epoch, loss_sum / loss_weight, val.loss, val.contrastive, val.reconstruction,
                        val.diag_accuracy, tr.diag_accuracy};
        result.history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (val.loss < best_val) {
            best_val = val.loss;
            since_best = 0;
            result.model = model;
            result.history.selected_epoch = epoch;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    return result;
}

void write_history_csv(const TrainHistory& history, std::ostream& out) {
    out << "epoch,train_loss,val_loss,val_cont,val_rec,diag_acc,train_diag_acc\n";
    char line[256];
    for (const auto& e : history.epochs) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                      e.val_loss, e.val_contrastive, e.val_reconstruction, e.val_diag_accuracy,
                      e.train_diag_accuracy);
        out << line;
    }
}

} // namespace crisp
