#pragma once

// Confusion matrices, classification metrics, bootstrap confidence
// intervals and report rendering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "narrclf/error.hpp"
#include "narrclf/random.hpp"

namespace narrclf {

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

struct Metrics {
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct CiBounds {
    double lower = 0.0, upper = 0.0;
    std::size_t n_boot = 0;
    std::uint64_t seed = 0;

    bool operator==(const CiBounds&) const = default;
};

inline ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& golds) {
    if (preds.size() != golds.size()) throw LengthMismatch("predictions and gold labels differ in length");
    if (preds.empty()) throw EmptyInput("no predictions to score");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] != 0, g = golds[i] != 0;
        if (p && g) ++cm.tp;
        else if (p) ++cm.fp;
        else if (g) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

// Zero denominators yield 0 for precision, recall and F1.
inline Metrics metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw EmptyInput("empty confusion matrix");
    Metrics m;
    const auto d = [](std::size_t x) { return static_cast<double>(x); };
    m.accuracy = d(cm.tp + cm.tn) / d(cm.total());
    m.precision = cm.tp + cm.fp ? d(cm.tp) / d(cm.tp + cm.fp) : 0.0;
    m.recall = cm.tp + cm.fn ? d(cm.tp) / d(cm.tp + cm.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

// Linear-interpolation percentile of sorted data, q in [0, 1].
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw EmptyInput("percentile of empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

// F1 over `n_boot` paired resamples of the evaluation set. Iteration b draws
// its indices from an RNG seeded with seed + b.
inline std::vector<double> bootstrap_f1_samples(const std::vector<int>& preds, const std::vector<int>& golds,
                                                std::size_t n_boot, std::uint64_t seed) {
    if (preds.size() != golds.size()) throw LengthMismatch("predictions and gold labels differ in length");
    if (preds.size() < 2) throw EmptyInput("bootstrap needs at least 2 instances");
    const std::size_t n = preds.size();
    std::vector<double> f1s(n_boot);
    for (std::size_t b = 0; b < n_boot; ++b) {
        auto rng = make_rng(seed + b);
        ConfusionMatrix cm;
        for (std::size_t k = 0; k < n; ++k) {
            const auto i = static_cast<std::size_t>(uniform_index(rng, n));
            const bool p = preds[i] != 0, g = golds[i] != 0;
            if (p && g) ++cm.tp;
            else if (p) ++cm.fp;
            else if (g) ++cm.fn;
            else ++cm.tn;
        }
        f1s[b] = metrics(cm).f1;
    }
    return f1s;
}

inline CiBounds bootstrap_ci(const std::vector<int>& preds, const std::vector<int>& golds, std::size_t n_boot = 1000,
                             double alpha = 0.05, std::uint64_t seed = 0) {
    if (n_boot == 0) throw InvalidArgument("n_boot must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
    auto f1s = bootstrap_f1_samples(preds, golds, n_boot, seed);
    std::sort(f1s.begin(), f1s.end());
    return {percentile_sorted(f1s, alpha / 2.0), percentile_sorted(f1s, 1.0 - alpha / 2.0), n_boot, seed};
}

// Half-up rounding to `digits` decimals. The small nudge absorbs binary
// representation error so that e.g. 0.565 rounds to 0.57.
inline double round_half_up(double x, int digits = 2) {
    const double scale = std::pow(10.0, digits);
    return std::floor(x * scale + 0.5 + 1e-9) / scale;
}

// ---------------------------------------------------------------------------
// Reports

struct ReportRow {
    std::string model;
    ConfusionMatrix confusion;
    Metrics metrics;
    CiBounds f1_ci;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    std::uint64_t seed = 0;
    std::size_t n_boot = 0;
    std::string config_hash;
};

inline ReportRow evaluate_row(std::string model, const std::vector<int>& preds, const std::vector<int>& golds,
                              std::size_t n_boot, double alpha, std::uint64_t seed) {
    ReportRow row;
    row.model = std::move(model);
    row.confusion = confusion(preds, golds);
    row.metrics = metrics(row.confusion);
    row.f1_ci = bootstrap_ci(preds, golds, n_boot, alpha, seed);
    return row;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"model", row.model},
                        {"accuracy", row.metrics.accuracy},
                        {"precision", row.metrics.precision},
                        {"recall", row.metrics.recall},
                        {"f1", row.metrics.f1},
                        {"ci", {row.f1_ci.lower, row.f1_ci.upper}},
                        {"confusion", {{"tp", row.confusion.tp}, {"fp", row.confusion.fp},
                                       {"tn", row.confusion.tn}, {"fn", row.confusion.fn}}}});
    }
    nlohmann::json j{{"rows", std::move(rows)}, {"seed", r.seed}, {"n_boot", r.n_boot}};
    if (!r.config_hash.empty()) j["config_hash"] = r.config_hash;
    return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n_boot = j.at("n_boot").get<std::size_t>();
    r.config_hash = j.value("config_hash", std::string());
    for (const auto& jr : j.at("rows")) {
        ReportRow row;
        row.model = jr.at("model").get<std::string>();
        row.metrics = {jr.at("accuracy").get<double>(), jr.at("precision").get<double>(),
                       jr.at("recall").get<double>(), jr.at("f1").get<double>()};
        row.f1_ci = {jr.at("ci").at(0).get<double>(), jr.at("ci").at(1).get<double>(), r.n_boot, r.seed};
        const auto& c = jr.at("confusion");
        row.confusion = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                         c.at("tn").get<std::size_t>(), c.at("fn").get<std::size_t>()};
        r.rows.push_back(std::move(row));
    }
    return r;
}

inline std::string render_text(const EvalReport& r) {
    auto fmt2 = [](double x) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << round_half_up(x);
        return s.str();
    };
    std::size_t name_w = 5;
    for (const auto& row : r.rows) name_w = std::max(name_w, row.model.size());

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(name_w)) << "Model"
        << "  Accuracy  Precision  Recall  F1 Score (95% CI)\n";
    for (const auto& row : r.rows) {
        out << std::left << std::setw(static_cast<int>(name_w)) << row.model << "  " << std::setw(8)
            << fmt2(row.metrics.accuracy) << "  " << std::setw(9) << fmt2(row.metrics.precision) << "  "
            << std::setw(6) << fmt2(row.metrics.recall) << "  " << fmt2(row.metrics.f1) << " ("
            << fmt2(row.f1_ci.lower) << "-" << fmt2(row.f1_ci.upper) << ")\n";
    }
    for (const auto& row : r.rows) {
        const auto& c = row.confusion;
        out << "\n" << row.model << " confusion (rows: gold, cols: predicted)\n"
            << "            pred 0  pred 1\n"
            << "  gold 0  " << std::right << std::setw(8) << c.tn << std::setw(8) << c.fp << "\n"
            << "  gold 1  " << std::setw(8) << c.fn << std::setw(8) << c.tp << "\n"
            << std::left;
    }
    out << "\nbootstrap: n_boot=" << r.n_boot << " seed=" << r.seed << "\n";
    return out.str();
}

enum class ReportFormat { Text, Json };

inline std::string render_report(const EvalReport& r, ReportFormat format) {
    return format == ReportFormat::Json ? to_json(r).dump(2) + "\n" : render_text(r);
}

}  // namespace narrclf
