#pragma once

// Kernel SVM trained by sequential minimal optimization, plus stratified
// k-fold grid search over (C, kernel).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "narrclf/error.hpp"
#include "narrclf/eval.hpp"
#include "narrclf/features.hpp"
#include "narrclf/parallel.hpp"
#include "narrclf/random.hpp"

namespace narrclf {

enum class KernelKind { Linear, Rbf };

struct KernelSpec {
    KernelKind kind = KernelKind::Rbf;
    // Rbf only; unset means 1 / dim.
    std::optional<double> gamma;

    double gamma_for(std::size_t dim) const {
        if (gamma) return *gamma;
        return dim > 0 ? 1.0 / static_cast<double>(dim) : 1.0;
    }
    void validate() const {
        if (kind == KernelKind::Rbf && gamma && !(std::isfinite(*gamma) && *gamma > 0.0))
            throw ConfigError("rbf gamma must be finite and positive");
    }
    bool operator==(const KernelSpec&) const = default;

    static KernelSpec linear() { return {KernelKind::Linear, std::nullopt}; }
    static KernelSpec rbf(std::optional<double> gamma = std::nullopt) { return {KernelKind::Rbf, gamma}; }
};

inline std::string to_string(const KernelSpec& k) {
    if (k.kind == KernelKind::Linear) return "linear";
    return k.gamma ? "rbf(gamma=" + std::to_string(*k.gamma) + ")" : "rbf";
}

inline double kernel_eval(const FeatureVector& x, const FeatureVector& y, const KernelSpec& spec) {
    if (spec.kind == KernelKind::Linear) return dot(x, y);
    require_same_dim(x, y);
    return std::exp(-spec.gamma_for(x.dim) * squared_distance(x, y));
}

struct SvmConfig {
    double C = 1.0;
    KernelSpec kernel;
    double tol = 1e-3;
    int max_passes = 10;
    std::optional<std::size_t> max_iter;  // unset: 10 n^2, capped at 1e7
    std::uint64_t seed = 0;

    void validate() const {
        if (!(std::isfinite(C) && C > 0.0)) throw ConfigError("C must be finite and positive");
        if (!(tol > 0.0)) throw ConfigError("tol must be positive");
        if (max_passes < 0) throw ConfigError("max_passes must be >= 0");
        kernel.validate();
    }
    std::size_t iteration_cap(std::size_t n) const {
        if (max_iter) return *max_iter;
        const double cap = std::min(1e7, 10.0 * static_cast<double>(n) * static_cast<double>(n));
        return static_cast<std::size_t>(cap);
    }
};

inline nlohmann::json to_json(const SvmConfig& c) {
    return {{"C", c.C},
            {"kernel", c.kernel.kind == KernelKind::Linear ? "linear" : "rbf"},
            {"gamma", c.kernel.gamma ? nlohmann::json(*c.kernel.gamma) : nlohmann::json(nullptr)},
            {"tol", c.tol},
            {"max_passes", c.max_passes},
            {"max_iter", c.max_iter ? nlohmann::json(*c.max_iter) : nlohmann::json(nullptr)},
            {"seed", c.seed}};
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "linear") return KernelKind::Linear;
    if (s == "rbf") return KernelKind::Rbf;
    throw ConfigError("unknown kernel '" + s + "'");
}

inline SvmConfig svm_config_from_json(const nlohmann::json& j) {
    SvmConfig c;
    c.C = j.at("C").get<double>();
    c.kernel.kind = kernel_kind_from_string(j.at("kernel").get<std::string>());
    if (auto g = j.find("gamma"); g != j.end() && !g->is_null()) c.kernel.gamma = g->get<double>();
    c.tol = j.value("tol", c.tol);
    c.max_passes = j.value("max_passes", c.max_passes);
    if (auto m = j.find("max_iter"); m != j.end() && !m->is_null()) c.max_iter = m->get<std::size_t>();
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Dual solver

// Dense symmetric kernel matrix; the solver's only kernel cache.
class KernelMatrix {
public:
    KernelMatrix() = default;
    KernelMatrix(std::size_t n, std::vector<double> values) : n_(n), values_(std::move(values)) {}

    static KernelMatrix compute(std::span<const FeatureVector> xs, const KernelSpec& spec,
                                std::size_t threads = 1) {
        const std::size_t n = xs.size();
        std::vector<double> v(n * n);
        parallel_for(n, threads, [&](std::size_t i) {
            for (std::size_t j = 0; j <= i; ++j) v[i * n + j] = kernel_eval(xs[i], xs[j], spec);
        });
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) v[i * n + j] = v[j * n + i];
        return {n, std::move(v)};
    }

    KernelMatrix subset(std::span<const std::size_t> rows) const {
        const std::size_t m = rows.size();
        std::vector<double> v(m * m);
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = 0; b < m; ++b) v[a * m + b] = (*this)(rows[a], rows[b]);
        return {m, std::move(v)};
    }

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }

private:
    std::size_t n_ = 0;
    std::vector<double> values_;
};

struct DualSolution {
    std::vector<double> alpha;
    double bias = 0.0;  // decision = sum alpha_i y_i K(x_i, x) + bias
    double objective = 0.0;  // sum alpha - 1/2 alpha' Q alpha
    bool converged = false;
    std::size_t iterations = 0;
};

inline double dual_objective(const KernelMatrix& K, std::span<const int> y, std::span<const double> alpha) {
    double lin = 0.0, quad = 0.0;
    const std::size_t n = alpha.size();
    for (std::size_t i = 0; i < n; ++i) {
        lin += alpha[i];
        if (alpha[i] == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) quad += alpha[i] * alpha[j] * y[i] * y[j] * K(i, j);
    }
    return lin - 0.5 * quad;
}

// SMO on  min 1/2 a'Qa - e'a  s.t. y'a = 0, 0 <= a <= C  with Q_ij = y_i y_j K_ij.
// Working pairs use maximal-violation / second-order selection; candidate
// scan order is a seeded permutation, so ties resolve deterministically.
// Labels are +1/-1.
inline DualSolution solve_dual(const KernelMatrix& K, std::span<const int> y, const SvmConfig& cfg) {
    const std::size_t n = K.size();
    const double C = cfg.C;
    constexpr double tau = 1e-12;

    std::vector<double> alpha(n, 0.0), grad(n, -1.0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(cfg.seed);
    shuffle_in_place(order, rng);

    auto in_up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0.0); };
    auto in_low = [&](std::size_t t) { return (y[t] == 1 && alpha[t] > 0.0) || (y[t] == -1 && alpha[t] < C); };
    auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K(i, j); };

    auto recompute_gradient = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            double g = -1.0;
            for (std::size_t j = 0; j < n; ++j)
                if (alpha[j] != 0.0) g += Q(i, j) * alpha[j];
            grad[i] = g;
        }
    };

    const std::size_t cap = cfg.iteration_cap(n);
    std::size_t iter = 0;
    int refreshes = 0;
    bool converged = false;
    while (true) {
        // select i
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (auto t : order) {
            if (in_up(t) && -y[t] * grad[t] > gmax) {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        // select j
        double gmin = std::numeric_limits<double>::infinity();
        double best_gain = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (auto t : order) {
            if (!in_low(t)) continue;
            const double v = -y[t] * grad[t];
            gmin = std::min(gmin, v);
            if (i == n) continue;
            const double b = gmax - v;
            if (b > 0.0) {
                double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
                if (a <= 0.0) a = tau;
                const double gain = -(b * b) / a;
                if (gain < best_gain) {
                    best_gain = gain;
                    j = t;
                }
            }
        }

        if (i == n || j == n || gmax - gmin < cfg.tol) {
            // Accumulated gradient drift can fake convergence; re-derive and re-check.
            if (refreshes < cfg.max_passes) {
                ++refreshes;
                const auto before = grad;
                recompute_gradient();
                bool drifted = false;
                for (std::size_t t = 0; t < n; ++t)
                    drifted |= std::abs(before[t] - grad[t]) > 1e-12 * std::max(1.0, std::abs(grad[t]));
                if (drifted) continue;
            }
            converged = true;
            break;
        }
        if (iter >= cap) break;
        ++iter;

        const double old_ai = alpha[i], old_aj = alpha[j];
        double quad = K(i, i) + K(j, j) - 2.0 * K(i, j);
        if (quad <= 0.0) quad = tau;
        if (y[i] != y[j]) {
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
            } else {
                if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = -diff; }
            }
            if (diff > 0.0) {
                if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
            } else {
                if (alpha[j] > C) { alpha[j] = C; alpha[i] = C + diff; }
            }
        } else {
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
            } else {
                if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = sum; }
            }
            if (sum > C) {
                if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
            } else {
                if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = sum; }
            }
        }
        const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
        for (std::size_t t = 0; t < n; ++t) grad[t] += Q(t, i) * dai + Q(t, j) * daj;
    }

    // Offset: mean over free vectors, else midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        const bool at_upper = alpha[t] >= C, at_lower = alpha[t] <= 0.0;
        if (at_upper) {
            if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (at_lower) {
            if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

    DualSolution sol;
    sol.bias = -rho;
    sol.converged = converged;
    sol.iterations = iter;
    double lin = 0.0, quad = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        lin += alpha[t];
        quad += alpha[t] * (grad[t] + 1.0);  // (Q alpha)_t = grad_t + 1
    }
    sol.objective = lin - 0.5 * quad;
    sol.alpha = std::move(alpha);
    return sol;
}

// ---------------------------------------------------------------------------
// Model

struct SvmModel {
    std::vector<FeatureVector> support_vectors;
    std::vector<double> coeffs;  // alpha_i * y_i
    double bias = 0.0;
    SvmConfig config;            // kernel gamma resolved at training time
    std::size_t dim = 0;
    bool converged = true;
    std::size_t iterations = 0;
};

inline std::vector<int> to_signed_labels(std::span<const int> labels01) {
    std::vector<int> y(labels01.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (labels01[i] != 0 && labels01[i] != 1) throw InvalidArgument("labels must be 0 or 1");
        y[i] = labels01[i] == 1 ? 1 : -1;
    }
    return y;
}

// Trains on a precomputed kernel matrix of `X`. Labels are 0/1.
inline SvmModel train_smo(std::span<const FeatureVector> X, std::span<const int> labels, const KernelMatrix& K,
                          const SvmConfig& cfg) {
    cfg.validate();
    if (X.size() != labels.size()) throw LengthMismatch("features and labels differ in length");
    if (X.size() < 2) throw SingleClass("need at least 2 training points");
    if (K.size() != X.size()) throw DimensionMismatch("kernel matrix does not match training set");
    for (const auto& x : X) require_same_dim(x, X[0]);
    const auto y = to_signed_labels(labels);
    if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y[0]; }))
        throw SingleClass("training labels contain a single class");

    const auto sol = solve_dual(K, y, cfg);
    SvmModel m;
    m.config = cfg;
    m.dim = X[0].dim;
    if (m.config.kernel.kind == KernelKind::Rbf) m.config.kernel.gamma = cfg.kernel.gamma_for(m.dim);
    m.bias = sol.bias;
    m.converged = sol.converged;
    m.iterations = sol.iterations;
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (sol.alpha[i] > 0.0) {
            m.support_vectors.push_back(X[i]);
            m.coeffs.push_back(sol.alpha[i] * y[i]);
        }
    }
    return m;
}

inline SvmModel train_smo(std::span<const FeatureVector> X, std::span<const int> labels, const SvmConfig& cfg) {
    if (X.empty()) throw SingleClass("empty training set");
    SvmConfig resolved = cfg;
    if (resolved.kernel.kind == KernelKind::Rbf) resolved.kernel.gamma = cfg.kernel.gamma_for(X[0].dim);
    return train_smo(X, labels, KernelMatrix::compute(X, resolved.kernel), resolved);
}

inline double decision_value(const SvmModel& m, const FeatureVector& x) {
    if (x.dim != m.dim) throw DimensionMismatch("input dim " + std::to_string(x.dim) + " vs model dim " + std::to_string(m.dim));
    double v = m.bias;
    for (std::size_t i = 0; i < m.support_vectors.size(); ++i)
        v += m.coeffs[i] * kernel_eval(m.support_vectors[i], x, m.config.kernel);
    return v;
}

inline int predict(const SvmModel& m, const FeatureVector& x) { return decision_value(m, x) >= 0.0 ? 1 : 0; }

inline nlohmann::json to_json(const SvmModel& m) {
    nlohmann::json svs = nlohmann::json::array();
    for (std::size_t i = 0; i < m.support_vectors.size(); ++i) {
        const auto& sv = m.support_vectors[i];
        nlohmann::json sparse = nlohmann::json::array();
        for (const auto& e : sv.sparse) sparse.push_back({e.index, e.weight});
        svs.push_back({{"sparse", std::move(sparse)},
                       {"engineered", sv.engineered ? nlohmann::json(*sv.engineered) : nlohmann::json(nullptr)},
                       {"coeff", m.coeffs[i]}});
    }
    return {{"version", 1},
            {"config", to_json(m.config)},
            {"dim", m.dim},
            {"bias", m.bias},
            {"converged", m.converged},
            {"iterations", m.iterations},
            {"svs", std::move(svs)}};
}

inline SvmModel svm_model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("version").get<int>() != 1) throw ArtifactError("unsupported model version");
        SvmModel m;
        m.config = svm_config_from_json(j.at("config"));
        m.dim = j.at("dim").get<std::size_t>();
        m.bias = j.at("bias").get<double>();
        m.converged = j.value("converged", true);
        m.iterations = j.value("iterations", std::size_t{0});
        for (const auto& sv : j.at("svs")) {
            FeatureVector v;
            for (const auto& e : sv.at("sparse")) v.sparse.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<double>()});
            if (auto eng = sv.find("engineered"); eng != sv.end() && !eng->is_null())
                v.engineered = eng->get<std::array<double, 3>>();
            v.dim = m.dim;
            m.support_vectors.push_back(std::move(v));
            m.coeffs.push_back(sv.at("coeff").get<double>());
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactError(std::string("malformed model: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Grid search

enum class CvMode { KFold, Dev };

struct GridSpec {
    std::vector<double> C_values{2, 4, 6, 8, 16, 32, 64, 128, 256, 512, 1024, 2048};
    std::vector<KernelSpec> kernels{KernelSpec::linear(), KernelSpec::rbf()};
    std::size_t folds = 5;
    CvMode mode = CvMode::KFold;
    std::size_t threads = 0;  // 0 = hardware concurrency

    void validate() const {
        if (C_values.empty() || kernels.empty()) throw ConfigError("grid must not be empty");
        if (mode == CvMode::KFold && folds < 2) throw ConfigError("need at least 2 folds");
        for (double c : C_values)
            if (!(c > 0.0)) throw ConfigError("grid C values must be positive");
    }
};

struct FoldScore {
    double accuracy = 0.0, f1 = 0.0;
};

struct CvCell {
    SvmConfig config;
    std::vector<FoldScore> folds;
    double mean_f1 = 0.0, mean_accuracy = 0.0;
};

struct CvReport {
    std::vector<CvCell> cells;
    std::size_t best = 0;
    CvMode mode = CvMode::KFold;
    std::uint64_t seed = 0;
};

// Fold index per instance: each class is shuffled and dealt round-robin.
inline std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == 1 ? 1 : 0].push_back(i);
    for (const auto& members : by_class)
        if (members.size() < k) throw DegenerateFolds("each class needs at least " + std::to_string(k) + " instances");
    std::vector<std::size_t> fold(labels.size());
    auto rng = make_rng(seed);
    for (int cls : {1, 0}) {
        auto members = by_class[static_cast<std::size_t>(cls)];
        shuffle_in_place(members, rng);
        for (std::size_t p = 0; p < members.size(); ++p) fold[members[p]] = p % k;
    }
    return fold;
}

// Higher mean F1, then higher mean accuracy, then smaller C, then linear.
inline bool better_cell(const CvCell& a, const CvCell& b) {
    if (a.mean_f1 != b.mean_f1) return a.mean_f1 > b.mean_f1;
    if (a.mean_accuracy != b.mean_accuracy) return a.mean_accuracy > b.mean_accuracy;
    if (a.config.C != b.config.C) return a.config.C < b.config.C;
    return a.config.kernel.kind == KernelKind::Linear && b.config.kernel.kind == KernelKind::Rbf;
}

// `base` supplies tol / max_passes / max_iter / seed for every cell. In Dev
// mode `dev_X` / `dev_y` score each config trained on the full training set.
inline CvReport grid_search(std::span<const FeatureVector> X, std::span<const int> labels, const GridSpec& grid,
                            std::uint64_t seed, const SvmConfig& base = {},
                            std::span<const FeatureVector> dev_X = {}, std::span<const int> dev_labels = {}) {
    grid.validate();
    if (X.size() != labels.size()) throw LengthMismatch("features and labels differ in length");
    if (X.empty()) throw DegenerateFolds("empty training set");

    std::vector<SvmConfig> configs;
    for (const auto& kernel : grid.kernels) {
        for (double C : grid.C_values) {
            SvmConfig c = base;
            c.C = C;
            c.kernel = kernel;
            if (kernel.kind == KernelKind::Rbf) c.kernel.gamma = kernel.gamma_for(X[0].dim);
            configs.push_back(c);
        }
    }

    std::vector<std::vector<std::size_t>> train_rows, test_rows;
    if (grid.mode == CvMode::KFold) {
        const auto fold = stratified_folds(labels, grid.folds, seed);
        train_rows.resize(grid.folds);
        test_rows.resize(grid.folds);
        for (std::size_t i = 0; i < X.size(); ++i)
            for (std::size_t f = 0; f < grid.folds; ++f) (fold[i] == f ? test_rows : train_rows)[f].push_back(i);
    } else {
        if (dev_X.empty() || dev_X.size() != dev_labels.size()) throw DegenerateFolds("dev mode needs a labeled dev set");
        train_rows.emplace_back(X.size());
        std::iota(train_rows[0].begin(), train_rows[0].end(), std::size_t{0});
    }

    // One Gram matrix per distinct kernel over the training points.
    std::vector<KernelMatrix> grams;
    std::vector<std::size_t> gram_of(configs.size());
    std::vector<KernelSpec> seen;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        auto it = std::find(seen.begin(), seen.end(), configs[c].kernel);
        if (it == seen.end()) {
            seen.push_back(configs[c].kernel);
            grams.push_back(KernelMatrix::compute(X, configs[c].kernel, grid.threads));
            gram_of[c] = grams.size() - 1;
        } else {
            gram_of[c] = static_cast<std::size_t>(it - seen.begin());
        }
    }

    const std::size_t n_folds = train_rows.size();
    std::vector<FoldScore> scores(configs.size() * n_folds);
    parallel_for(scores.size(), grid.threads, [&](std::size_t cell) {
        const std::size_t c = cell / n_folds, f = cell % n_folds;
        const auto& rows = train_rows[f];
        std::vector<FeatureVector> fx;
        std::vector<int> fy;
        for (auto r : rows) {
            fx.push_back(X[r]);
            fy.push_back(labels[r]);
        }
        const auto model = train_smo(fx, fy, grams[gram_of[c]].subset(rows), configs[c]);
        std::vector<int> preds, golds;
        if (grid.mode == CvMode::KFold) {
            for (auto r : test_rows[f]) {
                preds.push_back(predict(model, X[r]));
                golds.push_back(labels[r]);
            }
        } else {
            for (std::size_t r = 0; r < dev_X.size(); ++r) {
                preds.push_back(predict(model, dev_X[r]));
                golds.push_back(dev_labels[r]);
            }
        }
        const auto m = metrics(confusion(preds, golds));
        scores[cell] = {m.accuracy, m.f1};
    });

    CvReport report;
    report.mode = grid.mode;
    report.seed = seed;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        CvCell cell;
        cell.config = configs[c];
        for (std::size_t f = 0; f < n_folds; ++f) {
            cell.folds.push_back(scores[c * n_folds + f]);
            cell.mean_f1 += scores[c * n_folds + f].f1;
            cell.mean_accuracy += scores[c * n_folds + f].accuracy;
        }
        cell.mean_f1 /= static_cast<double>(n_folds);
        cell.mean_accuracy /= static_cast<double>(n_folds);
        report.cells.push_back(std::move(cell));
    }
    for (std::size_t c = 1; c < report.cells.size(); ++c)
        if (better_cell(report.cells[c], report.cells[report.best])) report.best = c;
    return report;
}

inline nlohmann::json to_json(const CvReport& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : r.cells) {
        nlohmann::json folds = nlohmann::json::array();
        for (const auto& f : cell.folds) folds.push_back({{"accuracy", f.accuracy}, {"f1", f.f1}});
        cells.push_back({{"config", to_json(cell.config)},
                         {"folds", std::move(folds)},
                         {"mean_f1", cell.mean_f1},
                         {"mean_accuracy", cell.mean_accuracy}});
    }
    return {{"mode", r.mode == CvMode::KFold ? "kfold" : "dev"},
            {"seed", r.seed},
            {"best", r.best},
            {"selected", to_json(r.cells.at(r.best).config)},
            {"cells", std::move(cells)}};
}

}  // namespace narrclf
