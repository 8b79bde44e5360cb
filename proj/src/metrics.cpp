#include "crisp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "crisp/errors.hpp"
#include "crisp/numerics.hpp"

namespace crisp {

namespace {

void check_same_grid(const Mask& a, const Mask& b, const char* what) {
    if (a.height() != b.height() || a.width() != b.width() || a.num_classes() != b.num_classes()) {
        throw DimensionError(std::string(what) + ": mask shapes differ");
    }
}

} // namespace

double dice_score(const Mask& pred, const Mask& gt) {
    check_same_grid(pred, gt, "dice_score");
    std::size_t inter = 0, p_count = 0, g_count = 0;
    for (std::size_t i = 0; i < pred.pixel_count(); ++i) {
        const auto p = pred.label(i);
        const auto g = gt.label(i);
        p_count += p != 0;
        g_count += g != 0;
        inter += (p != 0 && p == g);
    }
    if (p_count + g_count == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p_count + g_count);
}

double sample_uncertainty(const UncertaintyMap& u, const Mask& pred) {
    if (u.height != pred.height() || u.width != pred.width()) {
        throw DimensionError("sample_uncertainty: map and prediction shapes differ");
    }
    const std::size_t fg = pred.foreground_count();
    if (fg == 0) throw DegenerateInputError("sample_uncertainty: prediction has no foreground pixels");
    double sum = 0.0;
    for (double v : u.values) sum += v;
    return sum / static_cast<double>(fg);
}

std::vector<double> confidence_from_uncertainty(const UncertaintyMap& u) {
    std::vector<double> c(u.values.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 1.0 - u.values[i];
    return c;
}

std::vector<std::uint8_t> error_map(const Mask& pred, const Mask& gt) {
    check_same_grid(pred, gt, "error_map");
    std::vector<std::uint8_t> e(pred.pixel_count());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = pred.label(i) != gt.label(i) ? 1 : 0;
    return e;
}

std::size_t ece_bin_index(double c, std::size_t bins) {
    const double scaled = std::ceil(c * static_cast<double>(bins));
    const auto idx = static_cast<std::size_t>(std::max(scaled, 1.0)) - 1;
    return std::min(idx, bins - 1);
}

double ece(std::span<const double> confidences, std::span<const std::uint8_t> correct, std::size_t bins) {
    if (confidences.size() != correct.size()) throw InputError("ece: length mismatch");
    if (bins < 1) throw ConfigError("ece: need at least one bin");
    if (confidences.empty()) return 0.0;
    std::vector<double> conf_sum(bins, 0.0), hit_sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        const double c = confidences[i];
        if (!(c >= 0.0 && c <= 1.0)) throw InputError("ece: confidence outside [0,1]");
        const std::size_t b = ece_bin_index(c, bins);
        conf_sum[b] += c;
        hit_sum[b] += correct[i] ? 1.0 : 0.0;
        ++count[b];
    }
    const double n = static_cast<double>(confidences.size());
    double total = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const double cnt = static_cast<double>(count[b]);
        total += (cnt / n) * std::abs(hit_sum[b] / cnt - conf_sum[b] / cnt);
    }
    return total;
}

double uncertainty_error_mi(const UncertaintyMap& u, std::span<const std::uint8_t> errors, std::size_t u_bins) {
    if (u.values.size() != errors.size()) throw DimensionError("uncertainty_error_mi: length mismatch");
    if (u_bins < 2) throw ConfigError("uncertainty_error_mi: need at least two uncertainty bins");
    if (errors.empty()) return 0.0;
    std::vector<double> joint(u_bins * 2, 0.0);
    for (std::size_t i = 0; i < errors.size(); ++i) {
        const double v = std::clamp(u.values[i], 0.0, 1.0);
        const auto b = std::min(static_cast<std::size_t>(v * static_cast<double>(u_bins)), u_bins - 1);
        joint[b * 2 + (errors[i] ? 1 : 0)] += 1.0;
    }
    const double n = static_cast<double>(errors.size());
    std::vector<double> pu(u_bins, 0.0);
    double pe[2] = {0.0, 0.0};
    for (std::size_t b = 0; b < u_bins; ++b) {
        for (int e = 0; e < 2; ++e) {
            joint[b * 2 + e] /= n;
            pu[b] += joint[b * 2 + e];
            pe[e] += joint[b * 2 + e];
        }
    }
    double mi = 0.0;
    for (std::size_t b = 0; b < u_bins; ++b) {
        for (int e = 0; e < 2; ++e) {
            const double pj = joint[b * 2 + e];
            if (pj > 0.0) mi += pj * std::log(pj / (pu[b] * pe[e]));
        }
    }
    return std::max(mi, 0.0);
}

double correlation_metric(std::span<const SampleRecord> records) {
    std::vector<double> dice, unc;
    for (const auto& r : records) {
        if (!r.uncertainty_defined) continue;
        dice.push_back(r.dice);
        unc.push_back(r.sample_uncertainty);
    }
    if (dice.size() < 2) throw DegenerateInputError("correlation_metric: fewer than two valid records");
    return std::abs(pearson(dice, unc));
}

SampleRecord evaluate_sample(const Mask& gt, const Mask& pred, const UncertaintyMap& u, const EvalConfig& config) {
    check_same_grid(pred, gt, "evaluate");
    if (u.height != gt.height() || u.width != gt.width()) {
        throw InputError("evaluate: uncertainty map shape differs from the masks");
    }
    SampleRecord r;
    r.dice = dice_score(pred, gt);
    const auto errors = error_map(pred, gt);
    for (auto e : errors) r.error_pixel_count += e;
    r.mi = uncertainty_error_mi(u, errors, config.mi_bins);
    std::vector<std::uint8_t> correct(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i) correct[i] = errors[i] ? 0 : 1;
    r.ece = ece(confidence_from_uncertainty(u), correct, config.ece_bins);
    if (pred.foreground_count() > 0) {
        r.sample_uncertainty = sample_uncertainty(u, pred);
    } else {
        r.uncertainty_defined = false;
    }
    return r;
}

EvalReport evaluate(std::span<const Mask> ground_truths, std::span<const Mask> predictions,
                    std::span<const UncertaintyMap> maps, const EvalConfig& config) {
    if (ground_truths.size() != predictions.size() || ground_truths.size() != maps.size()) {
        throw InputError("evaluate: ground truths, predictions and maps must have equal lengths");
    }
    if (ground_truths.empty()) throw InputError("evaluate: no samples");
    EvalReport report;
    report.config = config;
    std::vector<double> all_conf;
    std::vector<std::uint8_t> all_correct;
    double mi_num = 0.0, mi_den = 0.0;
    for (std::size_t i = 0; i < ground_truths.size(); ++i) {
        SampleRecord r = evaluate_sample(ground_truths[i], predictions[i], maps[i], config);
        const auto conf = confidence_from_uncertainty(maps[i]);
        all_conf.insert(all_conf.end(), conf.begin(), conf.end());
        for (std::size_t p = 0; p < conf.size(); ++p) {
            all_correct.push_back(predictions[i].label(p) == ground_truths[i].label(p) ? 1 : 0);
        }
        mi_num += r.mi * static_cast<double>(r.error_pixel_count);
        mi_den += static_cast<double>(r.error_pixel_count);
        report.records.push_back(r);
    }
    report.ece = ece(all_conf, all_correct, config.ece_bins);
    report.all_perfect = mi_den == 0.0;
    report.weighted_mi = report.all_perfect ? 0.0 : mi_num / mi_den;
    try {
        report.correlation = correlation_metric(report.records);
    } catch (const DegenerateInputError&) {
        report.correlation.reset();
    }
    return report;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["config"] = {{"ece_bins", report.config.ece_bins},
                   {"ece_binning", "equal-width"},
                   {"mi_bins", report.config.mi_bins},
                   {"mi_units", "nats"},
                   {"confidence", "1 - uncertainty"}};
    auto per = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < report.records.size(); ++i) {
        const auto& r = report.records[i];
        nlohmann::ordered_json s;
        s["index"] = i;
        s["dice"] = r.dice;
        s["sample_uncertainty"] = r.uncertainty_defined ? nlohmann::ordered_json(r.sample_uncertainty)
                                                        : nlohmann::ordered_json(nullptr);
        s["error_pixels"] = r.error_pixel_count;
        s["mi"] = r.mi;
        s["ece"] = r.ece;
        per.push_back(std::move(s));
    }
    j["per_sample"] = std::move(per);
    nlohmann::ordered_json agg;
    agg["correlation"] = report.correlation ? nlohmann::ordered_json(*report.correlation)
                                            : nlohmann::ordered_json(nullptr);
    agg["correlation_degenerate"] = !report.correlation.has_value();
    agg["ece"] = report.ece;
    agg["weighted_mi"] = report.weighted_mi;
    agg["all_perfect"] = report.all_perfect;
    j["aggregate"] = std::move(agg);
    return j.dump(2) + "\n";
}

std::string records_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "index,dice,sample_uncertainty,error_pixels,mi,ece,uncertainty_defined\n";
    char line[256];
    for (std::size_t i = 0; i < report.records.size(); ++i) {
        const auto& r = report.records[i];
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%zu,%.17g,%.17g,%d\n", i, r.dice, r.sample_uncertainty,
                      r.error_pixel_count, r.mi, r.ece, r.uncertainty_defined ? 1 : 0);
        out << line;
    }
    return out.str();
}

} // namespace crisp
