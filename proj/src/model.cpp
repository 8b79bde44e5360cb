#include "crisp/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "crisp/errors.hpp"
#include "crisp/random.hpp"

namespace crisp {

namespace {

Dense make_dense(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(out, in);
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    return {std::move(w), Vector(out, 0.0)};
}

Matrix make_projection(std::size_t in, std::size_t out, Rng& rng) {
    return make_dense(in, out, rng).weight;
}

TwoLayerNet make_net(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    TwoLayerNet net;
    net.hidden = make_dense(in, hidden, rng);
    net.output = make_dense(hidden, out, rng);
    return net;
}

Dense zeros_like(const Dense& d) {
    return {Matrix(d.weight.rows(), d.weight.cols()), Vector(d.bias.size(), 0.0)};
}

TwoLayerNet zeros_like(const TwoLayerNet& n) {
    return {zeros_like(n.hidden), zeros_like(n.output)};
}

template <class Params, class View>
std::vector<View> collect_views(Params& p) {
    auto dense = [](std::vector<View>& out, std::string_view w_name, std::string_view b_name, auto& d) {
        out.push_back({w_name, d.weight.values(), true});
        out.push_back({b_name, std::span(d.bias), false});
    };
    std::vector<View> out;
    dense(out, "image_encoder.hidden.weight", "image_encoder.hidden.bias", p.image_encoder.hidden);
    dense(out, "image_encoder.output.weight", "image_encoder.output.bias", p.image_encoder.output);
    dense(out, "mask_encoder.hidden.weight", "mask_encoder.hidden.bias", p.mask_encoder.hidden);
    dense(out, "mask_encoder.output.weight", "mask_encoder.output.bias", p.mask_encoder.output);
    out.push_back({"image_projection", p.image_projection.values(), true});
    out.push_back({"mask_projection", p.mask_projection.values(), true});
    dense(out, "decoder.hidden.weight", "decoder.hidden.bias", p.decoder.hidden);
    dense(out, "decoder.output.weight", "decoder.output.bias", p.decoder.output);
    dense(out, "segment_adapter.weight", "segment_adapter.bias", p.segment_adapter);
    out.push_back({"log_temperature", std::span(&p.log_temperature, 1), false});
    return out;
}

void check_length(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) +
                             ", got " + std::to_string(got));
    }
}

} // namespace

void ModelConfig::validate() const {
    if (height < 2 || width < 2) throw ConfigError("model: height and width must be >= 2");
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (image_latent_dim < 2 || mask_latent_dim < 2 || joint_dim < 2 || hidden < 2) {
        throw ConfigError("model: all latent and hidden dimensions must be >= 2");
    }
    if (joint_dim > std::min(image_latent_dim, mask_latent_dim)) {
        throw ConfigError("model: joint_dim must not exceed the encoder latent dimensions");
    }
}

Matrix forward(const TwoLayerNet& net, const Matrix& inputs, TwoLayerCache* cache) {
    Matrix h = matmul_transposed(inputs, net.hidden.weight);
    for (std::size_t b = 0; b < h.rows(); ++b) {
        auto row = h.row(b);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = std::tanh(row[i] + net.hidden.bias[i]);
    }
    Matrix out = matmul_transposed(h, net.output.weight);
    for (std::size_t b = 0; b < out.rows(); ++b) {
        auto row = out.row(b);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] += net.output.bias[i];
    }
    if (cache) cache->hidden = std::move(h);
    return out;
}

Vector forward(const TwoLayerNet& net, std::span<const double> input) {
    check_length(input.size(), net.hidden.inputs(), "forward");
    const Matrix out = forward(net, Matrix(1, input.size(), Vector(input.begin(), input.end())));
    return Vector(out.values().begin(), out.values().end());
}

Matrix backward(const TwoLayerNet& net, const Matrix& inputs, const TwoLayerCache& cache,
                const Matrix& grad_outputs, TwoLayerNet* grads, bool want_input_grad) {
    if (grad_outputs.cols() != net.output.outputs() || grad_outputs.rows() != inputs.rows()) {
        throw DimensionError("backward: gradient shape does not match the network output");
    }
    if (grads) {
        add_transposed_product(grads->output.weight, grad_outputs, cache.hidden);
        for (std::size_t b = 0; b < grad_outputs.rows(); ++b) {
            const auto g = grad_outputs.row(b);
            for (std::size_t i = 0; i < g.size(); ++i) grads->output.bias[i] += g[i];
        }
    }
    Matrix grad_hidden = matmul_rows(grad_outputs, net.output.weight);
    for (std::size_t b = 0; b < grad_hidden.rows(); ++b) {
        auto g = grad_hidden.row(b);
        const auto h = cache.hidden.row(b);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - h[i] * h[i];
    }
    if (grads) {
        add_transposed_product(grads->hidden.weight, grad_hidden, inputs);
        for (std::size_t b = 0; b < grad_hidden.rows(); ++b) {
            const auto g = grad_hidden.row(b);
            for (std::size_t i = 0; i < g.size(); ++i) grads->hidden.bias[i] += g[i];
        }
    }
    if (!want_input_grad) return {};
    return matmul_rows(grad_hidden, net.hidden.weight);
}

CrispParams CrispParams::zeros_like() const {
    CrispParams z;
    z.image_encoder = crisp::zeros_like(image_encoder);
    z.mask_encoder = crisp::zeros_like(mask_encoder);
    z.image_projection = Matrix(image_projection.rows(), image_projection.cols());
    z.mask_projection = Matrix(mask_projection.rows(), mask_projection.cols());
    z.decoder = crisp::zeros_like(decoder);
    z.segment_adapter = crisp::zeros_like(segment_adapter);
    z.log_temperature = 0.0;
    return z;
}

std::vector<ParamView> parameter_views(CrispParams& params) {
    return collect_views<CrispParams, ParamView>(params);
}

std::vector<ConstParamView> parameter_views(const CrispParams& params) {
    return collect_views<const CrispParams, ConstParamView>(params);
}

std::size_t parameter_count(const CrispParams& params) {
    std::size_t n = 0;
    for (const auto& v : parameter_views(params)) n += v.values.size();
    return n;
}

double temperature_scale(double log_temperature) {
    return std::min(std::exp(log_temperature), kMaxTemperatureScale);
}

CrispModel init_model(const ModelConfig& config) {
    config.validate();
    Rng rng(config.init_seed);
    CrispModel m{config, {}};
    auto& p = m.params;
    p.image_encoder = make_net(config.pixels(), config.hidden, config.image_latent_dim, rng);
    p.mask_encoder = make_net(config.mask_inputs(), config.hidden, config.mask_latent_dim, rng);
    p.image_projection = make_projection(config.image_latent_dim, config.joint_dim, rng);
    p.mask_projection = make_projection(config.mask_latent_dim, config.joint_dim, rng);
    p.decoder = make_net(config.mask_latent_dim, config.hidden, config.mask_inputs(), rng);
    p.segment_adapter = make_dense(config.image_latent_dim, config.mask_latent_dim, rng);
    p.log_temperature = std::log(1.0 / kInitialTemperature);
    return m;
}

Vector encode_image(const CrispModel& model, const Image& image) {
    if (image.height != model.config.height || image.width != model.config.width) {
        throw DimensionError("encode_image: image is " + std::to_string(image.height) + "x" +
                             std::to_string(image.width) + ", model expects " +
                             std::to_string(model.config.height) + "x" + std::to_string(model.config.width));
    }
    return forward(model.params.image_encoder, image.pixels);
}

Vector encode_mask(const CrispModel& model, const Mask& mask) {
    if (mask.height() != model.config.height || mask.width() != model.config.width ||
        mask.num_classes() != model.config.num_classes) {
        throw DimensionError("encode_mask: mask shape does not match the model");
    }
    return forward(model.params.mask_encoder, mask.one_hot());
}

JointEmbedding project(const CrispModel& model, std::span<const double> z, Side side) {
    const Matrix& w = side == Side::image ? model.params.image_projection : model.params.mask_projection;
    check_length(z.size(), w.cols(), "project");
    auto [unit, n] = l2_normalize(matvec(w, z));
    return {std::move(unit)};
}

Matrix similarity_matrix(std::span<const JointEmbedding> image_embeddings,
                         std::span<const JointEmbedding> mask_embeddings, double log_temperature) {
    if (image_embeddings.size() != mask_embeddings.size()) {
        throw DimensionError("similarity_matrix: batch sizes differ");
    }
    const double scale = temperature_scale(log_temperature);
    const std::size_t b = image_embeddings.size();
    Matrix s(b, b);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j)
            s(i, j) = dot(image_embeddings[i].h, mask_embeddings[j].h) * scale;
    return s;
}

Vector decode_logits(const CrispModel& model, std::span<const double> mask_latent) {
    check_length(mask_latent.size(), model.config.mask_latent_dim, "decode");
    return forward(model.params.decoder, mask_latent);
}

ProbMap pixel_softmax(std::size_t num_classes, std::size_t height, std::size_t width,
                      std::span<const double> logits) {
    const std::size_t n = height * width;
    check_length(logits.size(), num_classes * n, "pixel_softmax");
    ProbMap out{num_classes, height, width, std::vector<double>(logits.size())};
    for (std::size_t p = 0; p < n; ++p) {
        double mx = logits[p];
        for (std::size_t k = 1; k < num_classes; ++k) mx = std::max(mx, logits[k * n + p]);
        double sum = 0.0;
        for (std::size_t k = 0; k < num_classes; ++k) {
            const double e = std::exp(logits[k * n + p] - mx);
            out.values[k * n + p] = e;
            sum += e;
        }
        for (std::size_t k = 0; k < num_classes; ++k) out.values[k * n + p] /= sum;
    }
    return out;
}

ProbMap decode(const CrispModel& model, std::span<const double> mask_latent) {
    const auto& c = model.config;
    return pixel_softmax(c.num_classes, c.height, c.width, decode_logits(model, mask_latent));
}

ProbMap segment(const CrispModel& model, const Image& image) {
    const Vector zx = encode_image(model, image);
    Vector zy = matvec(model.params.segment_adapter.weight, zx);
    for (std::size_t i = 0; i < zy.size(); ++i) zy[i] += model.params.segment_adapter.bias[i];
    return decode(model, zy);
}

std::string encode_checkpoint(const CrispModel& model) {
    const auto& c = model.config;
    detail::ByteWriter w;
    w.raw(kCheckpointMagic);
    for (std::size_t v : {c.height, c.width, c.num_classes, c.image_latent_dim, c.mask_latent_dim,
                          c.joint_dim, c.hidden}) {
        w.u32(static_cast<std::uint32_t>(v));
    }
    w.u64(c.init_seed);
    for (const auto& view : parameter_views(model.params)) {
        for (double v : view.values) w.f64(v);
    }
    return w.take();
}

CrispModel decode_checkpoint(std::string_view bytes) {
    detail::ByteReader r(bytes, "checkpoint");
    r.expect_magic(kCheckpointMagic);
    ModelConfig c;
    c.height = r.u32();
    c.width = r.u32();
    c.num_classes = r.u32();
    c.image_latent_dim = r.u32();
    c.mask_latent_dim = r.u32();
    c.joint_dim = r.u32();
    c.hidden = r.u32();
    c.init_seed = r.u64();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: invalid stored configuration: ") + e.what());
    }
    // Shapes come from the config; allocate them without spending RNG time.
    CrispModel m{c, {}};
    auto& p = m.params;
    auto dense = [](std::size_t in, std::size_t out) { return Dense{Matrix(out, in), Vector(out, 0.0)}; };
    p.image_encoder = {dense(c.pixels(), c.hidden), dense(c.hidden, c.image_latent_dim)};
    p.mask_encoder = {dense(c.mask_inputs(), c.hidden), dense(c.hidden, c.mask_latent_dim)};
    p.image_projection = Matrix(c.joint_dim, c.image_latent_dim);
    p.mask_projection = Matrix(c.joint_dim, c.mask_latent_dim);
    p.decoder = {dense(c.mask_latent_dim, c.hidden), dense(c.hidden, c.mask_inputs())};
    p.segment_adapter = dense(c.image_latent_dim, c.mask_latent_dim);

    const std::size_t expected = parameter_count(p) * 8;
    if (r.remaining() != expected) {
        throw DimensionError("checkpoint: parameter payload is " + std::to_string(r.remaining()) +
                             " bytes, configuration requires " + std::to_string(expected));
    }
    for (auto& view : parameter_views(p)) {
        for (double& v : view.values) v = r.f64();
        require_finite(view.values, "checkpoint");
    }
    r.expect_end();
    return m;
}

void save_checkpoint(const CrispModel& model, const std::filesystem::path& path) {
    detail::write_file(path, encode_checkpoint(model));
}

CrispModel load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
    CrispModel m = decode_checkpoint(detail::read_file(path));
    if (expected && !(*expected == m.config)) {
        throw DimensionError(path.string() + ": checkpoint configuration does not match the expected model");
    }
    return m;
}

} // namespace crisp
