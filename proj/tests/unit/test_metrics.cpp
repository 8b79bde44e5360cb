#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "crisp/errors.hpp"
#include "crisp/metrics.hpp"

using namespace crisp;
using doctest::Approx;

namespace {

Mask square(std::size_t grid, std::size_t y0, std::size_t x0, std::size_t side, std::uint8_t label = 1,
            std::size_t k = 2) {
    Mask m(grid, grid, k);
    for (std::size_t y = y0; y < y0 + side; ++y)
        for (std::size_t x = x0; x < x0 + side; ++x) m.set_label(y * grid + x, label);
    return m;
}

UncertaintyMap constant_map(std::size_t h, std::size_t w, double v) { return {h, w, Vector(h * w, v)}; }

} // namespace

TEST_CASE("dice_score") {
    const Mask a = square(32, 5, 5, 10);
    CHECK(dice_score(a, a) == 1.0);
    CHECK(dice_score(a, square(32, 20, 20, 10)) == 0.0);
    CHECK(dice_score(a, square(32, 5, 6, 10)) == Approx(0.9).epsilon(1e-15));
    CHECK(dice_score(Mask(8, 8, 2), Mask(8, 8, 2)) == 1.0);
    CHECK_THROWS_AS(dice_score(a, Mask(16, 16, 2)), DimensionError);
}

TEST_CASE("dice_score symmetry and class permutation") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const Mask a = oracle::random_mask(8, 8, 3, rng);
        const Mask b = oracle::random_mask(8, 8, 3, rng);
        CHECK(dice_score(a, b) == dice_score(b, a));
        auto swap = [](const Mask& m) {
            std::vector<std::uint8_t> l(m.labels().begin(), m.labels().end());
            for (auto& v : l) v = v == 1 ? 2 : (v == 2 ? 1 : 0);
            return Mask(m.height(), m.width(), m.num_classes(), l);
        };
        CHECK(dice_score(swap(a), swap(b)) == dice_score(a, b));
        CHECK(dice_score(a, b) >= 0.0);
        CHECK(dice_score(a, b) <= 1.0);
    }
}

TEST_CASE("sample_uncertainty") {
    Mask m(4, 4, 2);
    for (std::size_t p = 0; p < 8; ++p) m.set_label(p, 1);
    CHECK(sample_uncertainty(constant_map(4, 4, 0.0), m) == 0.0);
    CHECK(sample_uncertainty(constant_map(4, 4, 1.0), m) == 2.0);

    Rng rng(3);
    const Mask r = oracle::random_mask(8, 8, 3, rng);
    UncertaintyMap u{8, 8, Vector(64)};
    double sum = 0.0;
    std::size_t fg = 0;
    for (std::size_t p = 0; p < 64; ++p) {
        u.values[p] = rng.uniform();
        sum += u.values[p];
        fg += r.label(p) != 0;
    }
    CHECK(sample_uncertainty(u, r) == Approx(sum / fg).epsilon(1e-14));
    CHECK_THROWS_AS(sample_uncertainty(u, Mask(8, 8, 3)), DegenerateInputError);
}

TEST_CASE("correlation_metric") {
    std::vector<SampleRecord> recs;
    for (double d : {0.2, 0.5, 0.9, 0.7}) recs.push_back({d, 1.0 - d, 1, 0.0, 0.0, true});
    CHECK(correlation_metric(recs) == Approx(1.0).epsilon(1e-14));

    std::vector<SampleRecord> flat;
    for (double d : {0.2, 0.5, 0.9}) flat.push_back({d, 0.3, 1, 0.0, 0.0, true});
    CHECK_THROWS_AS(correlation_metric(flat), DegenerateInputError);

    Rng rng(10);
    std::vector<SampleRecord> ten;
    Vector dice, unc;
    for (int i = 0; i < 10; ++i) {
        ten.push_back({rng.uniform(), rng.uniform(0, 3), 1, 0.0, 0.0, true});
        dice.push_back(ten.back().dice);
        unc.push_back(ten.back().sample_uncertainty);
    }
    CHECK(correlation_metric(ten) == Approx(std::abs(oracle::naive_pearson(dice, unc))).epsilon(1e-12));

    std::vector<SampleRecord> scaled = ten;
    for (auto& r : scaled) {
        r.dice = 3.0 * r.dice + 1.0;
        r.sample_uncertainty = 0.25 * r.sample_uncertainty - 2.0;
    }
    CHECK(correlation_metric(scaled) == Approx(correlation_metric(ten)).epsilon(1e-12));

    ten[0].uncertainty_defined = false;
    ten[0].sample_uncertainty = 1e9;
    dice.erase(dice.begin());
    unc.erase(unc.begin());
    CHECK(correlation_metric(ten) == Approx(std::abs(oracle::naive_pearson(dice, unc))).epsilon(1e-12));
}

TEST_CASE("ece") {
    const std::vector<std::uint8_t> yes(6, 1), no(6, 0);
    const Vector ones(6, 1.0);
    CHECK(ece(ones, yes, 10) == 0.0);
    CHECK(ece(ones, no, 10) == 1.0);
    CHECK(ece(Vector{0.2, 0.2, 0.9, 0.9}, std::vector<std::uint8_t>{0, 1, 1, 1}, 2) == Approx(0.2).epsilon(1e-15));
    CHECK_THROWS_AS(ece(Vector{1.2}, std::vector<std::uint8_t>{1}, 10), InputError);
    CHECK_THROWS_AS(ece(Vector{0.5, 0.5}, std::vector<std::uint8_t>{1}, 10), InputError);
}

TEST_CASE("ece bins are right-inclusive") {
    CHECK(ece_bin_index(0.0, 10) == 0);
    CHECK(ece_bin_index(0.1, 10) == 0);
    CHECK(ece_bin_index(0.1000001, 10) == 1);
    CHECK(ece_bin_index(0.5, 2) == 0);
    CHECK(ece_bin_index(1.0, 10) == 9);
}

TEST_CASE("ece is the same through uncertainty and confidence") {
    Rng rng(4);
    UncertaintyMap u{8, 8, Vector(64)};
    std::vector<std::uint8_t> correct(64);
    for (std::size_t i = 0; i < 64; ++i) {
        u.values[i] = rng.uniform();
        correct[i] = rng.below(2);
    }
    Vector c(64);
    for (std::size_t i = 0; i < 64; ++i) c[i] = 1.0 - u.values[i];
    CHECK(ece(confidence_from_uncertainty(u), correct, 10) == ece(c, correct, 10));
}

TEST_CASE("uncertainty_error_mi") {
    std::vector<std::uint8_t> err(64);
    for (std::size_t i = 0; i < 64; ++i) err[i] = i % 2;
    CHECK(uncertainty_error_mi(constant_map(8, 8, 0.4), err, 32) == 0.0);

    UncertaintyMap indicator{8, 8, Vector(64)};
    for (std::size_t i = 0; i < 64; ++i) indicator.values[i] = err[i];
    CHECK(std::abs(uncertainty_error_mi(indicator, err, 32) - std::log(2.0)) <= 1e-9);

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        UncertaintyMap u{8, 8, Vector(64)};
        for (std::size_t i = 0; i < 64; ++i) {
            err[i] = rng.below(3) == 0;
            u.values[i] = std::min(1.0, rng.uniform() * 0.5 + 0.5 * err[i]);
        }
        const std::size_t bins = 2 + rng.below(40);
        const double mi = uncertainty_error_mi(u, err, bins);
        CHECK(mi >= 0.0);
        CHECK(mi == Approx(oracle::naive_mi(u.values, err, bins)).epsilon(1e-12));
    }
}

TEST_CASE("evaluate aggregates a three-sample case by hand") {
    // Ground truth: a 4×4 square on an 8×8 grid; predictions are shifted or exact.
    const Mask gt = square(8, 2, 2, 4);
    const std::vector<Mask> gts{gt, gt, gt};
    const std::vector<Mask> preds{gt, square(8, 2, 3, 4), square(8, 3, 3, 4)};
    std::vector<UncertaintyMap> maps;
    for (std::size_t i = 0; i < 3; ++i) {
        UncertaintyMap u{8, 8, Vector(64, 0.0)};
        const auto err = error_map(preds[i], gts[i]);
        for (std::size_t p = 0; p < 64; ++p) u.values[p] = err[p] ? 1.0 : 0.1 * static_cast<double>(i);
        maps.push_back(u);
    }
    const EvalConfig config{4, 8};
    const EvalReport r = evaluate(gts, preds, maps, config);
    REQUIRE(r.records.size() == 3);

    // Dice: 1, 2·12/32, 2·9/32. Errors: 0, 8, 14.
    CHECK(r.records[0].dice == 1.0);
    CHECK(r.records[1].dice == Approx(0.75).epsilon(1e-15));
    CHECK(r.records[2].dice == Approx(18.0 / 32.0).epsilon(1e-15));
    CHECK(r.records[0].error_pixel_count == 0);
    CHECK(r.records[1].error_pixel_count == 8);
    CHECK(r.records[2].error_pixel_count == 14);

    // Sample uncertainty: (errors + 0.1·i·(64 − errors)) / 16.
    const double su[3] = {0.0, (8 + 0.1 * 56) / 16.0, (14 + 0.2 * 50) / 16.0};
    for (int i = 0; i < 3; ++i) CHECK(r.records[i].sample_uncertainty == Approx(su[i]).epsilon(1e-14));

    // MI of an indicator map: the binary entropy of the error rate.
    auto h = [](double p) { return -p * std::log(p) - (1 - p) * std::log(1 - p); };
    CHECK(r.records[0].mi == 0.0);
    CHECK(r.records[1].mi == Approx(h(8.0 / 64.0)).epsilon(1e-12));
    CHECK(r.records[2].mi == Approx(h(14.0 / 64.0)).epsilon(1e-12));
    CHECK(r.weighted_mi == Approx((8 * h(8.0 / 64.0) + 14 * h(14.0 / 64.0)) / 22.0).epsilon(1e-12));
    CHECK_FALSE(r.all_perfect);

    // Pooled ECE over 192 pixels with 4 bins. Errors sit at confidence 0 (bin 0, accuracy 0);
    // correct pixels sit at confidence 1, 0.9 and 0.8, all in the last bin with accuracy 1.
    const double correct1 = 64, correct2 = 56, correct3 = 50;
    const double mean_conf = (correct1 * 1.0 + correct2 * 0.9 + correct3 * 0.8) / (correct1 + correct2 + correct3);
    const double expected_ece = (correct1 + correct2 + correct3) / 192.0 * (1.0 - mean_conf);
    CHECK(r.ece == Approx(expected_ece).epsilon(1e-12));

    const Vector dice{1.0, 0.75, 18.0 / 32.0};
    const Vector unc{su[0], su[1], su[2]};
    REQUIRE(r.correlation.has_value());
    CHECK(*r.correlation == Approx(std::abs(oracle::naive_pearson(dice, unc))).epsilon(1e-12));
}

TEST_CASE("evaluate degenerate and singleton cases") {
    const Mask gt = square(8, 2, 2, 4);
    const std::vector<Mask> gts{gt, gt};
    const std::vector<UncertaintyMap> maps{constant_map(8, 8, 0.0), constant_map(8, 8, 0.0)};
    const EvalReport perfect = evaluate(gts, gts, maps);
    CHECK(perfect.all_perfect);
    CHECK(perfect.weighted_mi == 0.0);
    CHECK_FALSE(perfect.correlation.has_value());
    for (const auto& rec : perfect.records) CHECK(rec.dice == 1.0);
    const auto j = nlohmann::json::parse(report_to_json(perfect));
    CHECK(j["aggregate"]["correlation"].is_null());
    CHECK(j["aggregate"]["correlation_degenerate"] == true);
    CHECK(j["aggregate"]["all_perfect"] == true);
    CHECK(j["config"]["mi_units"] == "nats");

    const std::vector<Mask> one_gt{gt};
    const std::vector<Mask> one_pred{square(8, 2, 3, 4)};
    UncertaintyMap u{8, 8, Vector(64)};
    Rng rng(2);
    for (double& v : u.values) v = rng.uniform();
    const std::vector<UncertaintyMap> one_map{u};
    const EvalReport single = evaluate(one_gt, one_pred, one_map);
    CHECK(single.weighted_mi == single.records[0].mi);

    CHECK_THROWS_AS(evaluate(gts, one_pred, maps), InputError);
}

TEST_CASE("evaluate flags samples without predicted foreground") {
    const Mask gt = square(8, 2, 2, 4);
    const std::vector<Mask> gts{gt, gt, gt};
    const std::vector<Mask> preds{Mask(8, 8, 2), square(8, 2, 3, 4), square(8, 3, 3, 4)};
    const std::vector<UncertaintyMap> maps{constant_map(8, 8, 0.5), constant_map(8, 8, 0.2),
                                           constant_map(8, 8, 0.4)};
    const EvalReport r = evaluate(gts, preds, maps);
    CHECK_FALSE(r.records[0].uncertainty_defined);
    CHECK(r.correlation.has_value());
    const auto j = nlohmann::json::parse(report_to_json(r));
    CHECK(j["per_sample"][0]["sample_uncertainty"].is_null());
    CHECK(records_to_csv(r).rfind("index,dice,sample_uncertainty", 0) == 0);
}
