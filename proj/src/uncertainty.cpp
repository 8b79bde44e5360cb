#include "crisp/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "crisp/errors.hpp"
#include "crisp/morphology.hpp"

namespace crisp {

namespace {

constexpr double kUnitTolerance = 1e-9;
constexpr int kEdgeIterations = 5;

} // namespace

LatentBank build_bank(std::span<const Mask> masks, const CrispModel& model) {
    if (masks.size() < 2) throw ConfigError("build_bank: need at least 2 masks");
    const auto& c = model.config;
    LatentBank bank{Matrix(masks.size(), c.mask_latent_dim), Matrix(masks.size(), c.joint_dim)};
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const Vector z = encode_mask(model, masks[i]);
        JointEmbedding h;
        try {
            h = project(model, z, Side::mask);
        } catch (const DegenerateInputError&) {
            throw DegenerateInputError("build_bank: mask " + std::to_string(i) + " projects to the zero vector");
        }
        std::copy(z.begin(), z.end(), bank.mask_latents.row(i).begin());
        std::copy(h.h.begin(), h.h.end(), bank.joint_embeddings.row(i).begin());
    }
    return bank;
}

void validate_bank(const LatentBank& bank) {
    if (bank.mask_latents.rows() != bank.joint_embeddings.rows()) {
        throw ConfigError("latent bank: Z and H row counts differ");
    }
    for (std::size_t i = 0; i < bank.joint_embeddings.rows(); ++i) {
        const double n = norm(bank.joint_embeddings.row(i));
        if (std::abs(n - 1.0) > kUnitTolerance) {
            throw ConfigError("latent bank: row " + std::to_string(i) + " of H is not unit norm");
        }
    }
}

Retrieval retrieve(const JointEmbedding& query, const LatentBank& bank, std::size_t m) {
    const std::size_t n = bank.size();
    if (m < 1 || m > n) {
        throw ConfigError("retrieve: M = " + std::to_string(m) + " must lie in [1, " + std::to_string(n) + "]");
    }
    std::vector<double> sims(n);
    for (std::size_t i = 0; i < n; ++i) sims[i] = dot(bank.joint_embeddings.row(i), query.h);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                      [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
    Retrieval r;
    r.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
    for (std::size_t i : r.indices) r.similarities.push_back(sims[i]);
    return r;
}

std::size_t default_retrieval_count(std::size_t bank_size, double ratio) {
    const auto proportional = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(bank_size)));
    return std::min(bank_size, std::max<std::size_t>(5, proportional));
}

double taylor_bandwidth(double concentration, std::size_t sample_count) {
    if (!(concentration > 0.0)) throw DegenerateInputError("taylor_bandwidth: concentration must be > 0");
    if (sample_count == 0) throw DegenerateInputError("taylor_bandwidth: no samples");
    return std::pow(concentration, -0.5) *
           std::pow(40.0 * std::sqrt(std::numbers::pi) / static_cast<double>(sample_count), 0.2);
}

VmfKernel fit_vmf(const LatentBank& bank) {
    const std::size_t n = bank.size();
    if (n < 2) throw DegenerateInputError("fit_vmf: need at least 2 embeddings");
    const std::size_t d = bank.joint_embeddings.cols();
    Vector mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = bank.joint_embeddings.row(i);
        for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    }
    for (double& v : mean) v /= static_cast<double>(n);

    VmfKernel k;
    k.resultant_length = norm(mean);
    if (!(k.resultant_length > 0.0)) {
        throw DegenerateInputError("fit_vmf: embeddings cancel out (zero mean resultant)");
    }
    if (k.resultant_length >= 1.0 - 1e-12) {
        throw DegenerateInputError("fit_vmf: embeddings coincide, concentration is unbounded");
    }
    k.mean_direction = mean;
    for (double& v : k.mean_direction) v /= k.resultant_length;
    const double r = k.resultant_length;
    k.concentration = r * (static_cast<double>(d) - r * r) / (1.0 - r * r);
    k.bandwidth = taylor_bandwidth(k.concentration, n);
    return k;
}

double vmf_weight(std::span<const double> bank_embedding, std::span<const double> query, double bandwidth) {
    if (!(bandwidth > 0.0)) throw ConfigError("vmf_weight: bandwidth must be > 0");
    return std::exp((dot(bank_embedding, query) - 1.0) / bandwidth);
}

CrispEstimator::CrispEstimator(const CrispModel& model, LatentBank bank)
    : model_(&model), bank_(std::move(bank)), kernel_(fit_vmf(bank_)) {
    if (bank_.mask_latents.cols() != model.config.mask_latent_dim ||
        bank_.joint_embeddings.cols() != model.config.joint_dim) {
        throw DimensionError("CrispEstimator: bank dimensions do not match the model");
    }
}

UncertaintyMap CrispEstimator::estimate(const Image& image, const Mask& prediction,
                                        const CrispOptions& options) const {
    const auto& c = model_->config;
    if (prediction.height() != c.height || prediction.width() != c.width ||
        prediction.num_classes() != c.num_classes) {
        throw DimensionError("crisp_uncertainty: prediction shape does not match the model");
    }
    const JointEmbedding query = project(*model_, encode_image(*model_, image), Side::image);
    const Retrieval hits = retrieve(query, bank_, options.retrieval_count);

    const std::size_t n = c.pixels();
    const std::size_t k_count = c.num_classes;
    UncertaintyMap u{c.height, c.width, std::vector<double>(n, 0.0)};
    double weight_sum = 0.0;
    for (std::size_t idx : hits.indices) {
        const double w = vmf_weight(bank_.joint_embeddings.row(idx), query.h, kernel_.bandwidth);
        weight_sum += w;
        const ProbMap decoded = decode(*model_, bank_.mask_latents.row(idx));
        for (std::size_t p = 0; p < n; ++p) {
            const std::size_t label = prediction.label(p);
            double l1 = 0.0;
            for (std::size_t k = 0; k < k_count; ++k) {
                l1 += std::abs(decoded.values[k * n + p] - (k == label ? 1.0 : 0.0));
            }
            u.values[p] += w * 0.5 * l1;
        }
    }
    const double denom = options.normalization == WeightNormalization::retrieval_count
                             ? static_cast<double>(hits.indices.size())
                             : weight_sum;
    for (double& v : u.values) v = std::clamp(v / denom, 0.0, 1.0);
    return u;
}

UncertaintyMap crisp_uncertainty(const Image& image, const Mask& prediction, const CrispModel& model,
                                 const LatentBank& bank, const CrispOptions& options) {
    return CrispEstimator(model, bank).estimate(image, prediction, options);
}

UncertaintyMap edge_uncertainty(const Mask& prediction) {
    const std::size_t h = prediction.height();
    const std::size_t w = prediction.width();
    const auto fg = prediction.foreground();
    UncertaintyMap u{h, w, std::vector<double>(fg.size(), 0.0)};

    BinaryPlane dilated(fg.begin(), fg.end());
    BinaryPlane eroded(fg.begin(), fg.end());
    for (int n = 1; n <= kEdgeIterations; ++n) {
        BinaryPlane next_dilated = dilate3x3(dilated, h, w);
        BinaryPlane next_eroded = erode3x3(eroded, h, w);
        const double weight = 1.0 - static_cast<double>(n) / kEdgeIterations;
        for (std::size_t p = 0; p < fg.size(); ++p) {
            const int ring = std::abs(int(next_dilated[p]) - int(dilated[p])) +
                             std::abs(int(eroded[p]) - int(next_eroded[p]));
            u.values[p] += ring * weight;
        }
        dilated = std::move(next_dilated);
        eroded = std::move(next_eroded);
    }
    for (double& v : u.values) v = std::clamp(v, 0.0, 1.0);
    return u;
}

UncertaintyMap entropy_uncertainty(const ProbMap& probs) {
    const std::size_t n = probs.pixel_count();
    if (probs.values.size() != probs.num_classes * n) throw DimensionError("entropy_uncertainty: map size");
    UncertaintyMap u{probs.height, probs.width, std::vector<double>(n, 0.0)};
    if (probs.num_classes < 2) return u;
    const double norm_factor = std::log(static_cast<double>(probs.num_classes));
    for (std::size_t p = 0; p < n; ++p) {
        double hsum = 0.0;
        for (std::size_t k = 0; k < probs.num_classes; ++k) {
            const double q = probs.at(k, p);
            if (q > 0.0) hsum -= q * std::log(q);
        }
        u.values[p] = std::clamp(hsum / norm_factor, 0.0, 1.0);
    }
    return u;
}

std::string encode_uncertainty_raw(const UncertaintyMap& map) {
    if (map.values.size() != map.pixel_count()) throw DimensionError("uncertainty map: size mismatch");
    detail::ByteWriter w;
    w.raw(kUncertaintyMagic);
    w.u32(static_cast<std::uint32_t>(map.height));
    w.u32(static_cast<std::uint32_t>(map.width));
    for (double v : map.values) w.f64(v);
    return w.take();
}

UncertaintyMap decode_uncertainty_raw(std::string_view bytes) {
    detail::ByteReader r(bytes, "uncertainty map");
    r.expect_magic(kUncertaintyMagic);
    UncertaintyMap m;
    m.height = r.u32();
    m.width = r.u32();
    if (r.remaining() != m.pixel_count() * 8) throw FormatError("uncertainty map: payload size mismatch");
    m.values.resize(m.pixel_count());
    for (double& v : m.values) {
        v = r.f64();
        if (!(v >= 0.0 && v <= 1.0)) throw FormatError("uncertainty map: value outside [0,1]");
    }
    return m;
}

void save_uncertainty_raw(const UncertaintyMap& map, const std::filesystem::path& path) {
    detail::write_file(path, encode_uncertainty_raw(map));
}

UncertaintyMap load_uncertainty_raw(const std::filesystem::path& path) {
    return decode_uncertainty_raw(detail::read_file(path));
}

std::string encode_bank(const LatentBank& bank) {
    validate_bank(bank);
    detail::ByteWriter w;
    w.raw(kBankMagic);
    w.u32(static_cast<std::uint32_t>(bank.size()));
    w.u32(static_cast<std::uint32_t>(bank.mask_latents.cols()));
    w.u32(static_cast<std::uint32_t>(bank.joint_embeddings.cols()));
    for (double v : bank.mask_latents.values()) w.f64(v);
    for (double v : bank.joint_embeddings.values()) w.f64(v);
    return w.take();
}

LatentBank decode_bank(std::string_view bytes) {
    detail::ByteReader r(bytes, "latent bank");
    r.expect_magic(kBankMagic);
    const std::size_t n = r.u32();
    const std::size_t dy = r.u32();
    const std::size_t dh = r.u32();
    if (r.remaining() != n * (dy + dh) * 8) throw FormatError("latent bank: payload size mismatch");
    LatentBank bank{Matrix(n, dy), Matrix(n, dh)};
    for (double& v : bank.mask_latents.values()) v = r.f64();
    for (double& v : bank.joint_embeddings.values()) v = r.f64();
    try {
        validate_bank(bank);
    } catch (const ConfigError& e) {
        throw FormatError(e.what());
    }
    return bank;
}

void save_bank(const LatentBank& bank, const std::filesystem::path& path) {
    detail::write_file(path, encode_bank(bank));
}

LatentBank load_bank(const std::filesystem::path& path) {
    return decode_bank(detail::read_file(path));
}

} // namespace crisp
