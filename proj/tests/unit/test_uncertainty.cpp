#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "crisp/errors.hpp"
#include "crisp/uncertainty.hpp"

using namespace crisp;
using doctest::Approx;

namespace {

LatentBank bank_from_rows(const std::vector<Vector>& rows) {
    Matrix h(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), h.row(i).begin());
    return {h, h};
}

Vector random_unit(std::size_t d, Rng& rng) {
    Vector v(d);
    for (double& x : v) x = rng.normal();
    return l2_normalize(v).first;
}

Mask centered_square(std::size_t side, std::size_t grid) {
    Mask m(grid, grid, 2);
    const std::size_t lo = (grid - side) / 2;
    for (std::size_t y = lo; y < lo + side; ++y)
        for (std::size_t x = lo; x < lo + side; ++x) m.set_label(y * grid + x, 1);
    return m;
}

std::vector<int> foreground_ints(const Mask& m) {
    std::vector<int> out;
    for (auto l : m.labels()) out.push_back(l != 0);
    return out;
}

/// Model whose decoder ignores its input and returns `decoded` with certainty,
/// whose image encoder always yields [0, 1], and whose mask encoder maps
/// masks with pixel 0 in class 0 to [0, 1] and others elsewhere.
CrispModel rigged_model(const Mask& decoded) {
    ModelConfig c;
    c.height = decoded.height();
    c.width = decoded.width();
    c.num_classes = 2;
    c.image_latent_dim = 2;
    c.mask_latent_dim = 2;
    c.joint_dim = 2;
    c.hidden = 2;
    CrispModel m = init_model(c);
    for (auto& v : parameter_views(m.params)) std::fill(v.values.begin(), v.values.end(), 0.0);
    m.params.image_encoder.output.bias = {0.0, 1.0};
    m.params.mask_encoder.hidden.weight(0, c.pixels()) = 1.0;
    m.params.mask_encoder.output.weight(0, 0) = 1.0;
    m.params.mask_encoder.output.bias = {0.0, 1.0};
    m.params.image_projection = Matrix::identity(2);
    m.params.mask_projection = Matrix::identity(2);
    const Vector oh = decoded.one_hot();
    for (std::size_t i = 0; i < oh.size(); ++i) m.params.decoder.output.bias[i] = 1000.0 * oh[i];
    return m;
}

} // namespace

TEST_CASE("build_bank shapes and unit rows") {
    const auto c = oracle::random_crisp_case(1, 9);
    const LatentBank bank = build_bank(c.bank_masks, c.model);
    CHECK(bank.size() == 9);
    CHECK(bank.mask_latents.cols() == 5);
    CHECK(bank.joint_embeddings.cols() == 3);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(std::abs(norm(bank.joint_embeddings.row(i)) - 1.0) <= 1e-9);
        const Vector z = encode_mask(c.model, c.bank_masks[i]);
        CHECK(Vector(bank.mask_latents.row(i).begin(), bank.mask_latents.row(i).end()) == z);
    }
    CHECK(build_bank(c.bank_masks, c.model) == bank);
    validate_bank(bank);
}

TEST_CASE("build_bank errors") {
    auto c = oracle::random_crisp_case(2, 4);
    CHECK_THROWS_AS(build_bank(std::span(c.bank_masks).first(1), c.model), ConfigError);
    c.model.params.mask_projection = Matrix(3, 5, 0.0);
    try {
        build_bank(c.bank_masks, c.model);
        FAIL("expected an error");
    } catch (const DegenerateInputError& e) {
        CHECK(std::string(e.what()).find("mask 0") != std::string::npos);
    }
}

TEST_CASE("retrieve hand cases") {
    Rng rng(3);
    std::vector<Vector> rows;
    for (int i = 0; i < 7; ++i) rows.push_back(random_unit(4, rng));
    const LatentBank bank = bank_from_rows(rows);
    const Retrieval self = retrieve({rows[4]}, bank, 3);
    CHECK(self.indices[0] == 4);
    CHECK(self.similarities[0] == Approx(1.0).epsilon(1e-15));

    const Retrieval all = retrieve({rows[0]}, bank, 7);
    std::vector<std::size_t> sorted = all.indices;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expected(7);
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(sorted == expected);

    CHECK_THROWS_AS(retrieve({rows[0]}, bank, 8), ConfigError);
    CHECK_THROWS_AS(retrieve({rows[0]}, bank, 0), ConfigError);
}

TEST_CASE("retrieve breaks ties by lower index") {
    const LatentBank bank = bank_from_rows({{0, 1}, {1, 0}, {0, 1}, {1, 0}});
    const Retrieval r = retrieve({{1, 0}}, bank, 3);
    CHECK(r.indices == std::vector<std::size_t>{1, 3, 0});
}

TEST_CASE("retrieve agrees with a full sort") {
    Rng rng(8);
    for (std::size_t n = 2; n <= 100; n += 7) {
        std::vector<Vector> rows;
        for (std::size_t i = 0; i < n; ++i) rows.push_back(random_unit(5, rng));
        const LatentBank bank = bank_from_rows(rows);
        const Vector q = random_unit(5, rng);
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = 0; k < 5; ++k) s += rows[i][k] * q[k];
            scored.emplace_back(-s, i);
        }
        std::sort(scored.begin(), scored.end());
        for (std::size_t m : {std::size_t{1}, std::min<std::size_t>(2, n), n / 2 + 1, n}) {
            const Retrieval r = retrieve({q}, bank, m);
            REQUIRE(r.indices.size() == m);
            for (std::size_t t = 0; t < m; ++t) {
                CHECK(r.indices[t] == scored[t].second);
                CHECK(r.similarities[t] == Approx(-scored[t].first).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("fit_vmf hand case") {
    const VmfKernel k = fit_vmf(bank_from_rows({{1, 0}, {0, 1}}));
    CHECK(std::abs(k.resultant_length - std::sqrt(2.0) / 2.0) <= 1e-12);
    CHECK(std::abs(k.concentration - 3.0 * std::sqrt(2.0) / 2.0) <= 1e-9);
    CHECK(k.concentration == Approx(2.1213).epsilon(1e-4));
    CHECK(std::abs(k.mean_direction[0] - std::sqrt(0.5)) <= 1e-12);
    const double b = std::pow(k.concentration, -0.5) * std::pow(40.0 * std::sqrt(M_PI) / 2.0, 0.2);
    CHECK(std::abs(k.bandwidth - b) <= 1e-9);
}

TEST_CASE("fit_vmf degenerate banks") {
    CHECK_THROWS_AS(fit_vmf(bank_from_rows({{1, 0}, {-1, 0}})), DegenerateInputError);
    CHECK_THROWS_AS(fit_vmf(bank_from_rows({{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}})), DegenerateInputError);
}

TEST_CASE("bandwidth follows the N^(-1/5) law") {
    const double kappa = 2.5;
    double previous = 1e9;
    for (std::size_t n : {2u, 10u, 50u, 200u, 1000u}) {
        const double b = taylor_bandwidth(kappa, n);
        CHECK(b < previous);
        previous = b;
        CHECK(std::abs(b / taylor_bandwidth(kappa, 2) - std::pow(n / 2.0, -0.2)) <= 1e-9);
    }
}

TEST_CASE("fit_vmf formulas hold on random banks") {
    Rng rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t d = 2 + rng.below(6), n = 3 + rng.below(40);
        const Vector center = random_unit(d, rng);
        std::vector<Vector> rows;
        for (std::size_t i = 0; i < n; ++i) {
            Vector v = random_unit(d, rng);
            for (std::size_t j = 0; j < d; ++j) v[j] += 1.5 * center[j];
            rows.push_back(l2_normalize(v).first);
        }
        const VmfKernel k = fit_vmf(bank_from_rows(rows));
        Vector mean(d, 0.0);
        for (const auto& r : rows)
            for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / static_cast<double>(n);
        const double r = oracle::naive_norm(mean);
        CHECK(std::abs(k.resultant_length - r) <= 1e-12);
        CHECK(std::abs(k.concentration - r * (d - r * r) / (1 - r * r)) <= 1e-9);
        CHECK(std::abs(k.bandwidth - std::pow(k.concentration, -0.5) * std::pow(40 * std::sqrt(M_PI) / n, 0.2)) <=
              1e-9);
    }
}

TEST_CASE("vmf_weight") {
    const Vector e1{1, 0}, e2{0, 1}, m1{-1, 0};
    CHECK(vmf_weight(e1, e1, 0.3) == 1.0);
    CHECK(vmf_weight(e1, e2, 1.0) == Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(vmf_weight(e1, e2, 1.0) == Approx(0.3679).epsilon(1e-4));
    CHECK(vmf_weight(e1, m1, 0.5) == Approx(std::exp(-4.0)).epsilon(1e-15));
}

TEST_CASE("vmf_weight is monotone and peaks at the top retrieval") {
    Rng rng(6);
    std::vector<Vector> rows;
    for (int i = 0; i < 30; ++i) rows.push_back(random_unit(4, rng));
    const LatentBank bank = bank_from_rows(rows);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector q = random_unit(4, rng);
        std::vector<std::pair<double, double>> sim_weight;
        std::size_t best = 0;
        double best_w = -1.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double w = vmf_weight(rows[i], q, 0.4);
            CHECK(w > 0.0);
            CHECK(w <= 1.0);
            sim_weight.emplace_back(dot(rows[i], q), w);
            if (w > best_w) {
                best_w = w;
                best = i;
            }
        }
        std::sort(sim_weight.begin(), sim_weight.end());
        for (std::size_t i = 1; i < sim_weight.size(); ++i) CHECK(sim_weight[i].second >= sim_weight[i - 1].second);
        CHECK(retrieve({q}, bank, 1).indices[0] == best);
    }
}

TEST_CASE("default retrieval count") {
    CHECK(default_retrieval_count(200) == 6);
    CHECK(default_retrieval_count(100) == 5);
    CHECK(default_retrieval_count(1000) == 30);
    CHECK(default_retrieval_count(4) == 4);
}

TEST_CASE("crisp_uncertainty matches the naive oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = oracle::random_crisp_case(seed);
        const LatentBank bank = build_bank(c.bank_masks, c.model);
        for (auto norm : {WeightNormalization::retrieval_count, WeightNormalization::weight_sum}) {
            const UncertaintyMap u = crisp_uncertainty(c.image, c.prediction, c.model, bank, {3, norm});
            const Vector want = oracle::naive_crisp(c.model, c.bank_masks, c.image, c.prediction, 3,
                                                    norm == WeightNormalization::weight_sum);
            REQUIRE(u.values.size() == want.size());
            double worst = 0.0;
            for (std::size_t p = 0; p < want.size(); ++p) worst = std::max(worst, std::abs(u.values[p] - want[p]));
            CHECK(worst <= 1e-12);
        }
    }
}

TEST_CASE("crisp_uncertainty stays in the unit interval") {
    for (std::uint64_t seed = 100; seed < 130; ++seed) {
        const auto c = oracle::random_crisp_case(seed, 20);
        const CrispEstimator est(c.model, build_bank(c.bank_masks, c.model));
        for (std::size_t m : {1u, 5u, 20u}) {
            const UncertaintyMap u = est.estimate(c.image, c.prediction, {m, WeightNormalization::retrieval_count});
            for (double v : u.values) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
}

TEST_CASE("crisp_uncertainty is zero when every decoded sample equals the prediction") {
    Mask target(8, 8, 2);
    target.set_label(10, 1);
    target.set_label(11, 1);
    const CrispModel m = rigged_model(target);
    Mask a(8, 8, 2), b(8, 8, 2);
    b.set_label(0, 1);
    const std::vector<Mask> masks{a, b};
    const Image image{8, 8, std::vector<double>(64, 0.3)};
    const UncertaintyMap u = crisp_uncertainty(image, target, m, build_bank(masks, m), {2, {}});
    for (double v : u.values) CHECK(v == 0.0);
}

TEST_CASE("crisp_uncertainty single-pixel difference") {
    Mask decoded(8, 8, 2);
    decoded.set_label(20, 1);
    decoded.set_label(21, 1);
    const CrispModel m = rigged_model(decoded);
    Mask a(8, 8, 2), b(8, 8, 2);
    b.set_label(0, 1);
    const std::vector<Mask> masks{b, a};
    const LatentBank bank = build_bank(masks, m);
    const Image image{8, 8, std::vector<double>(64, 0.5)};
    const Retrieval top = retrieve(project(m, encode_image(m, image), Side::image), bank, 1);
    REQUIRE(top.indices[0] == 1);
    CHECK(top.similarities[0] == 1.0);

    Mask prediction = decoded;
    prediction.set_label(33, 1);
    const UncertaintyMap u = crisp_uncertainty(image, prediction, m, bank, {1, {}});
    for (std::size_t p = 0; p < 64; ++p) CHECK(u.values[p] == (p == 33 ? 1.0 : 0.0));
}

TEST_CASE("crisp_uncertainty rejects bad shapes and M") {
    const auto c = oracle::random_crisp_case(3, 6);
    const LatentBank bank = build_bank(c.bank_masks, c.model);
    CHECK_THROWS_AS(crisp_uncertainty(c.image, Mask(4, 4, c.model.config.num_classes), c.model, bank, {2, {}}),
                    DimensionError);
    CHECK_THROWS_AS(crisp_uncertainty(c.image, c.prediction, c.model, bank, {7, {}}), ConfigError);
}

TEST_CASE("edge baseline on an empty mask") {
    const UncertaintyMap u = edge_uncertainty(Mask(32, 32, 3));
    for (double v : u.values) CHECK(v == 0.0);
}

TEST_CASE("edge baseline on a centered square") {
    const Mask sq = centered_square(10, 32);
    const UncertaintyMap u = edge_uncertainty(sq);
    const Vector want = oracle::brute_force_edge(foreground_ints(sq), 32, 32);
    CHECK(u.values == want);

    // Pixels just outside and just inside the square boundary form the n=1 ring.
    CHECK(u.values[10 * 32 + 15] == Approx(0.8).epsilon(1e-15));
    CHECK(u.values[11 * 32 + 15] == Approx(0.8).epsilon(1e-15));
    CHECK(u.values[16 * 32 + 16] == Approx(0.0));
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            int dist = 1000;
            for (int yy = 0; yy < 32; ++yy)
                for (int xx = 0; xx < 32; ++xx) {
                    const bool inside = sq.label(y, x) != 0;
                    if ((sq.label(yy, xx) != 0) != inside) dist = std::min(dist, std::max(std::abs(yy - y), std::abs(xx - x)));
                }
            if (dist >= 5) CHECK(u.values[y * 32 + x] == 0.0);
        }
}

TEST_CASE("edge baseline matches brute force on random shapes") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        Mask m(24, 28, 3);
        const int blobs = 1 + static_cast<int>(rng.below(3));
        for (int b = 0; b < blobs; ++b) {
            const int cy = static_cast<int>(rng.below(24)), cx = static_cast<int>(rng.below(28));
            const int r = 2 + static_cast<int>(rng.below(6));
            for (int y = 0; y < 24; ++y)
                for (int x = 0; x < 28; ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r)
                        m.set_label(y * 28 + x, static_cast<std::uint8_t>(1 + rng.below(2)));
        }
        const UncertaintyMap u = edge_uncertainty(m);
        CHECK(u.values == oracle::brute_force_edge(foreground_ints(m), 24, 28));
        for (double v : u.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("edge baseline is translation invariant") {
    const Mask sq = centered_square(8, 32);
    const UncertaintyMap base = edge_uncertainty(sq);
    for (int shift : {-3, 2, 4}) {
        Mask moved(32, 32, 2);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                if (sq.label(y, x)) moved.set_label((y + shift) * 32 + (x + shift), 1);
        const UncertaintyMap u = edge_uncertainty(moved);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const int sy = y + shift, sx = x + shift;
                if (sy >= 0 && sy < 32 && sx >= 0 && sx < 32) CHECK(u.values[sy * 32 + sx] == base.values[y * 32 + x]);
            }
    }
}

TEST_CASE("entropy baseline") {
    const ProbMap uniform{3, 4, 4, Vector(48, 1.0 / 3.0)};
    for (double v : entropy_uncertainty(uniform).values) CHECK(v == Approx(1.0).epsilon(1e-14));

    Rng rng(1);
    const Mask m = oracle::random_mask(4, 4, 3, rng);
    for (double v : entropy_uncertainty(ProbMap{3, 4, 4, m.one_hot()}).values) CHECK(v == 0.0);

    Vector values(8, 0.0);
    for (int p = 0; p < 4; ++p) values[p] = 1.0;
    values[2] = 0.5;
    values[4 + 2] = 0.5;
    const UncertaintyMap u = entropy_uncertainty(ProbMap{2, 2, 2, values});
    CHECK(u.values == Vector{0.0, 0.0, 1.0, 0.0});
}

TEST_CASE("uncertainty raw sidecar round-trip") {
    Rng rng(2);
    UncertaintyMap u{5, 7, Vector(35)};
    for (double& v : u.values) v = rng.uniform();
    u.values[0] = 0.0;
    u.values[1] = 1.0;
    const std::string bytes = encode_uncertainty_raw(u);
    CHECK(bytes.size() == 8 + 4 + 4 + 35 * 8);
    CHECK(bytes.substr(0, 8) == "CRSPUM01");
    CHECK(decode_uncertainty_raw(bytes).values == u.values);

    const auto path = std::filesystem::temp_directory_path() / "crisp_test_unc.raw";
    save_uncertainty_raw(u, path);
    CHECK(load_uncertainty_raw(path).values == u.values);
    std::filesystem::remove(path);

    std::string bad = bytes;
    bad[7] = '2';
    CHECK_THROWS_AS(decode_uncertainty_raw(bad), FormatError);
    CHECK_THROWS_AS(decode_uncertainty_raw(bytes.substr(0, bytes.size() - 3)), FormatError);
    UncertaintyMap out_of_range = u;
    out_of_range.values[3] = 1.5;
    CHECK_THROWS(decode_uncertainty_raw(encode_uncertainty_raw(out_of_range)));
}

TEST_CASE("bank file round-trip") {
    const auto c = oracle::random_crisp_case(5, 6);
    const LatentBank bank = build_bank(c.bank_masks, c.model);
    CHECK(decode_bank(encode_bank(bank)) == bank);
    std::string bad = encode_bank(bank);
    bad[0] = 'Z';
    CHECK_THROWS_AS(decode_bank(bad), FormatError);
}
