#pragma once

// Deliberately naive reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "crisp/maps.hpp"
#include "crisp/model.hpp"
#include "crisp/numerics.hpp"
#include "crisp/random.hpp"

namespace oracle {

using crisp::Matrix;
using crisp::Vector;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, crisp::Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform(-scale, scale);
    return m;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

inline double naive_norm(const Vector& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double naive_pearson(const Vector& a, const Vector& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / n;
        mb += b[i] / n;
    }
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

inline Vector naive_mlp(const crisp::TwoLayerNet& net, const Vector& x) {
    const Matrix& w1 = net.hidden.weight;
    const Matrix& w2 = net.output.weight;
    Vector h(w1.rows());
    for (std::size_t j = 0; j < w1.rows(); ++j) {
        double s = net.hidden.bias[j];
        for (std::size_t i = 0; i < x.size(); ++i) s += w1(j, i) * x[i];
        h[j] = std::tanh(s);
    }
    Vector out(w2.rows());
    for (std::size_t k = 0; k < w2.rows(); ++k) {
        double s = net.output.bias[k];
        for (std::size_t j = 0; j < h.size(); ++j) s += w2(k, j) * h[j];
        out[k] = s;
    }
    return out;
}

inline Vector naive_one_hot(const crisp::Mask& m) {
    const std::size_t n = m.height() * m.width();
    Vector v(m.num_classes() * n, 0.0);
    for (std::size_t p = 0; p < n; ++p) v[m.label(p) * n + p] = 1.0;
    return v;
}

inline Vector naive_unit(const Matrix& w, const Vector& z) {
    Vector h(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c) h[r] += w(r, c) * z[c];
    const double n = naive_norm(h);
    for (double& v : h) v /= n;
    return h;
}

/// Channel-major pixel softmax of decoder logits.
inline Vector naive_decode(const crisp::CrispModel& model, const Vector& z) {
    const Vector logits = naive_mlp(model.params.decoder, z);
    const std::size_t k = model.config.num_classes;
    const std::size_t n = model.config.height * model.config.width;
    Vector probs(logits.size());
    for (std::size_t p = 0; p < n; ++p) {
        double total = 0.0;
        for (std::size_t c = 0; c < k; ++c) total += std::exp(logits[c * n + p]);
        for (std::size_t c = 0; c < k; ++c) probs[c * n + p] = std::exp(logits[c * n + p]) / total;
    }
    return probs;
}

/// Uncertainty map built straight from the formulas: bank, mean direction,
/// concentration, bandwidth, full-sort retrieval, kernel weights, and the
/// weighted half-L1 difference to the one-hot prediction.
inline Vector naive_crisp(const crisp::CrispModel& model, const std::vector<crisp::Mask>& bank_masks,
                          const crisp::Image& image, const crisp::Mask& prediction, std::size_t m,
                          bool weight_sum_normalization = false) {
    const std::size_t n_bank = bank_masks.size();
    std::vector<Vector> z(n_bank), h(n_bank);
    for (std::size_t i = 0; i < n_bank; ++i) {
        z[i] = naive_mlp(model.params.mask_encoder, naive_one_hot(bank_masks[i]));
        h[i] = naive_unit(model.params.mask_projection, z[i]);
    }
    const std::size_t d = h[0].size();
    Vector mean(d, 0.0);
    for (const auto& row : h)
        for (std::size_t j = 0; j < d; ++j) mean[j] += row[j] / static_cast<double>(n_bank);
    const double r = naive_norm(mean);
    const double kappa = r * (static_cast<double>(d) - r * r) / (1.0 - r * r);
    const double b = std::pow(kappa, -0.5) *
                     std::pow(40.0 * std::sqrt(M_PI) / static_cast<double>(n_bank), 0.2);

    const Vector hx = naive_unit(model.params.image_projection, naive_mlp(model.params.image_encoder, image.pixels));
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < n_bank; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += h[i][j] * hx[j];
        scored.emplace_back(s, i);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });

    const std::size_t pixels = image.pixels.size();
    const std::size_t k = model.config.num_classes;
    const Vector target = naive_one_hot(prediction);
    Vector u(pixels, 0.0);
    double wsum = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        const auto [sim, idx] = scored[t];
        const double w = std::exp((sim - 1.0) / b);
        wsum += w;
        const Vector probs = naive_decode(model, z[idx]);
        for (std::size_t p = 0; p < pixels; ++p) {
            double diff = 0.0;
            for (std::size_t c = 0; c < k; ++c) diff += std::abs(probs[c * pixels + p] - target[c * pixels + p]);
            u[p] += w * diff / 2.0;
        }
    }
    for (double& v : u) v = std::min(1.0, std::max(0.0, v / (weight_sum_normalization ? wsum : double(m))));
    return u;
}

/// Edge map from Chebyshev distances: a pixel is in the n-th dilation when a
/// foreground pixel lies within distance n, and in the n-th erosion when the
/// whole (2n+1)-square around it is inside the grid and foreground.
inline Vector brute_force_edge(const std::vector<int>& fg, int height, int width) {
    auto at = [&](int y, int x) { return fg[y * width + x]; };
    auto dilated = [&](int y, int x, int n) {
        for (int dy = -n; dy <= n; ++dy)
            for (int dx = -n; dx <= n; ++dx) {
                const int yy = y + dy, xx = x + dx;
                if (yy >= 0 && yy < height && xx >= 0 && xx < width && at(yy, xx)) return 1;
            }
        return 0;
    };
    auto eroded = [&](int y, int x, int n) {
        for (int dy = -n; dy <= n; ++dy)
            for (int dx = -n; dx <= n; ++dx) {
                const int yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= height || xx < 0 || xx >= width || !at(yy, xx)) return 0;
            }
        return 1;
    };
    Vector u(fg.size(), 0.0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double v = 0.0;
            for (int n = 1; n <= 5; ++n) {
                const int ring = std::abs(dilated(y, x, n) - dilated(y, x, n - 1)) +
                                 std::abs(eroded(y, x, n - 1) - eroded(y, x, n));
                v += ring * (1.0 - n / 5.0);
            }
            u[y * width + x] = v;
        }
    return u;
}

/// Mutual information in nats from explicit joint counts.
inline double naive_mi(const Vector& u, const std::vector<std::uint8_t>& err, std::size_t bins) {
    std::vector<std::vector<double>> joint(bins, std::vector<double>(2, 0.0));
    for (std::size_t i = 0; i < u.size(); ++i) {
        std::size_t b = static_cast<std::size_t>(std::floor(u[i] * static_cast<double>(bins)));
        if (b >= bins) b = bins - 1;
        joint[b][err[i] ? 1 : 0] += 1.0;
    }
    const double n = static_cast<double>(u.size());
    double mi = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        const double pu = (joint[b][0] + joint[b][1]) / n;
        for (int e = 0; e < 2; ++e) {
            double pe = 0.0;
            for (std::size_t bb = 0; bb < bins; ++bb) pe += joint[bb][e] / n;
            const double p = joint[b][e] / n;
            if (p > 0) mi += p * std::log(p / (pu * pe));
        }
    }
    return mi;
}

inline crisp::Mask random_mask(std::size_t h, std::size_t w, std::size_t k, crisp::Rng& rng) {
    std::vector<std::uint8_t> labels(h * w);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(k));
    return crisp::Mask(h, w, k, std::move(labels));
}

/// A small random model, bank, image and prediction on an 8×8 grid.
struct CrispCase {
    crisp::CrispModel model;
    std::vector<crisp::Mask> bank_masks;
    crisp::Image image;
    crisp::Mask prediction;
};

inline CrispCase random_crisp_case(std::uint64_t seed, std::size_t bank_size = 12) {
    crisp::Rng rng(seed);
    crisp::ModelConfig c;
    c.height = 8;
    c.width = 8;
    c.num_classes = 2 + rng.below(2);
    c.image_latent_dim = 6;
    c.mask_latent_dim = 5;
    c.joint_dim = 3;
    c.hidden = 10;
    c.init_seed = rng.next();
    CrispCase out{crisp::init_model(c), {}, {8, 8, std::vector<double>(64)}, {}};
    // Larger decoder weights give peaked, varied decoded maps.
    for (double& v : out.model.params.decoder.output.weight.values()) v *= 8.0;
    for (double& v : out.model.params.decoder.output.bias) v = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < bank_size; ++i) out.bank_masks.push_back(random_mask(8, 8, c.num_classes, rng));
    for (double& v : out.image.pixels) v = rng.uniform();
    out.prediction = random_mask(8, 8, c.num_classes, rng);
    return out;
}

} // namespace oracle
