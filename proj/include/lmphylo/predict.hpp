// Benchmark-score prediction from similarity geometry.
//
// Features for a model are its full row of the similarity matrix. Rows are
// reduced to 15 components: center, whiten to the top principal directions,
// then a fixed-point ICA rotation (logcosh contrast, symmetric
// decorrelation, seeded initialization). If the rotation does not converge
// within 500 sweeps the transform degrades to whitening-only and says so.
//
// The regressor is sigmoid(w.x + b) trained with full-batch Adam on MSE
// (learning rate 1e-3, zero init). Evaluation is leave-one-family-out:
// fit on every other family, predict the held-out one, report Pearson r
// overall and per family. Zero-variance correlations are reported as
// "undefined (zero variance)", never as NaN.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lmphylo/errors.hpp"
#include "lmphylo/phylo_core.hpp"
#include "lmphylo/util/num.hpp"
#include "lmphylo/util/rng.hpp"

namespace lmphylo {

// ---- benchmark tables --------------------------------------------------------

struct BenchmarkTable {
    struct Row {
        std::string family;
        std::map<std::string, double> scores; // benchmark -> score in [0,1]; missing = absent
    };

    std::vector<std::string> model_order;
    std::vector<std::string> benchmark_names;
    std::map<std::string, Row> rows;

    const Row& row(const std::string& id) const {
        const auto it = rows.find(id);
        if (it == rows.end())
            throw input_error("benchmark table: unknown model '" + id + "'");
        return it->second;
    }
};

/// TSV with header "model_id family <bench>..."; missing scores are "?".
inline BenchmarkTable benchmark_table_from_string(const std::string& body,
                                                  const std::string& origin = "benchmark table") {
    BenchmarkTable table;
    std::istringstream in(body);
    std::string line;
    if (!std::getline(in, line))
        throw parse_error(origin + ": empty file");
    const auto header = detail::split_tabs(line);
    if (header.size() < 3 || header[0] != "model_id" || header[1] != "family")
        throw parse_error(origin + ": header must start with 'model_id\tfamily' and name at least one benchmark");
    table.benchmark_names.assign(header.begin() + 2, header.end());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        const auto cells = detail::split_tabs(line);
        if (cells.size() != header.size())
            throw parse_error(origin + ", line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " columns, got " +
                              std::to_string(cells.size()));
        if (cells[1].empty())
            throw parse_error(origin + ", line " + std::to_string(line_no) + ": empty family label");
        BenchmarkTable::Row row;
        row.family = cells[1];
        for (std::size_t b = 0; b < table.benchmark_names.size(); ++b) {
            const auto& cell = cells[b + 2];
            if (cell == "?" || cell.empty())
                continue;
            const double v = parse_double(cell, "benchmark score");
            if (v < 0.0 || v > 1.0)
                throw parse_error(origin + ", line " + std::to_string(line_no) + ": score " + cell +
                                  " outside [0,1]");
            row.scores[table.benchmark_names[b]] = v;
        }
        if (table.rows.count(cells[0]))
            throw parse_error(origin + ", line " + std::to_string(line_no) + ": duplicate model '" +
                              cells[0] + "'");
        table.model_order.push_back(cells[0]);
        table.rows[cells[0]] = std::move(row);
    }
    return table;
}

inline BenchmarkTable load_benchmark_table(const std::filesystem::path& path) {
    return benchmark_table_from_string(read_text_file(path), path.string());
}

inline std::string benchmark_table_to_string(const BenchmarkTable& table) {
    std::string out = "model_id\tfamily";
    for (const auto& b : table.benchmark_names)
        out += "\t" + b;
    out += '\n';
    for (const auto& id : table.model_order) {
        const auto& row = table.rows.at(id);
        out += id + "\t" + row.family;
        for (const auto& b : table.benchmark_names) {
            const auto it = row.scores.find(b);
            out += it == row.scores.end() ? "\t?" : "\t" + fmt_double(it->second);
        }
        out += '\n';
    }
    return out;
}

inline void save_benchmark_table(const BenchmarkTable& table, const std::filesystem::path& path) {
    atomic_write_file(path, benchmark_table_to_string(table));
}

// ---- features ----------------------------------------------------------------

/// A model's similarity to every roster member, self included: its row of S.
inline std::vector<double> features_from_similarity(const SimilarityMatrix& s, const std::string& id) {
    const std::size_t i = s.index_of(id);
    std::vector<double> row(s.size());
    for (std::size_t j = 0; j < s.size(); ++j)
        row[j] = s.at(i, j);
    return row;
}

// ---- Pearson -----------------------------------------------------------------

/// Sample Pearson correlation; empty when either side has zero variance.
inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw input_error("pearson: length mismatch");
    if (x.size() < 2)
        throw input_error("pearson: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        return std::nullopt;
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

// ---- ICA ---------------------------------------------------------------------

struct IcaTransform {
    int component_count = 15;
    Eigen::MatrixXd unmixing;  // k x n, combined rotation * whitening
    Eigen::VectorXd centering; // n
    Eigen::MatrixXd whitening; // k x n
    std::uint64_t seed = 0;
    bool converged = true; // false = fell back to whitening-only (PCA)
    int iterations = 0;

    /// rows-of-samples in, rows-of-components out: (m x n) -> (m x k)
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return (x.rowwise() - centering.transpose()) * unmixing.transpose();
    }

    Eigen::VectorXd apply_one(const Eigen::VectorXd& x) const {
        return unmixing * (x - centering);
    }
};

namespace detail {

/// (M M^T)^(-1/2) M: symmetric decorrelation, rows become orthonormal.
inline Eigen::MatrixXd sym_decorrelate(const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd mmt = m * m.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(mmt);
    if (eig.info() != Eigen::Success)
        throw numeric_error("ICA: eigendecomposition failed during decorrelation");
    const double floor = std::max(eig.eigenvalues().maxCoeff(), 1.0) * 1e-300;
    Eigen::VectorXd inv_sqrt = eig.eigenvalues();
    for (int i = 0; i < inv_sqrt.size(); ++i)
        inv_sqrt[i] = 1.0 / std::sqrt(std::max(inv_sqrt[i], floor));
    return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose() * m;
}

} // namespace detail

/// Center, whiten to k principal directions (population covariance), then
/// fixed-point ICA with logcosh contrast and symmetric decorrelation.
/// Deterministic given seed. Convergence: max rotation change < 1e-6 within
/// 500 sweeps; otherwise the transform is whitening-only with converged=false.
inline IcaTransform fit_ica(const Eigen::MatrixXd& features, int k = 15, std::uint64_t seed = 0) {
    const auto m = features.rows();
    const auto n = features.cols();
    if (k < 1)
        throw input_error("fit_ica: k must be positive");
    if (m <= k)
        throw input_error("fit_ica: need more than k=" + std::to_string(k) + " samples, got " +
                          std::to_string(m));
    if (!features.allFinite())
        throw input_error("fit_ica: features contain non-finite values");

    IcaTransform t;
    t.component_count = k;
    t.seed = seed;
    t.centering = features.colwise().mean();
    const Eigen::MatrixXd centered = features.rowwise() - t.centering.transpose();
    const Eigen::MatrixXd cov =
        (centered.transpose() * centered) / static_cast<double>(m);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success)
        throw numeric_error("fit_ica: covariance eigendecomposition failed");
    // eigenvalues ascend; the top k live at the tail
    const double lead = eig.eigenvalues()(n - 1);
    t.whitening.resize(k, n);
    for (int i = 0; i < k; ++i) {
        const double lambda = eig.eigenvalues()(n - 1 - i);
        if (lambda <= lead * 1e-12 || lambda <= 0.0)
            throw input_error("fit_ica: centered features have rank < k=" + std::to_string(k) +
                              "; use a smaller k");
        t.whitening.row(i) = eig.eigenvectors().col(n - 1 - i).transpose() / std::sqrt(lambda);
    }

    const Eigen::MatrixXd z = centered * t.whitening.transpose(); // m x k, unit covariance

    auto rng = RngStream::keyed(seed, std::string_view("ica-init"));
    Eigen::MatrixXd w(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            w(i, j) = rng.normal();
    w = detail::sym_decorrelate(w);

    constexpr int max_iter = 500;
    constexpr double tol = 1e-6;
    bool converged = false;
    int iter = 0;
    while (iter < max_iter) {
        ++iter;
        const Eigen::MatrixXd u = z * w.transpose();          // m x k projections
        const Eigen::MatrixXd g = u.array().tanh().matrix();  // logcosh contrast
        const Eigen::VectorXd g_prime_mean =
            (1.0 - g.array().square()).colwise().mean().transpose();
        Eigen::MatrixXd w_next =
            (g.transpose() * z) / static_cast<double>(m) - g_prime_mean.asDiagonal() * w;
        w_next = detail::sym_decorrelate(w_next);
        const double change =
            ((w_next * w.transpose()).diagonal().array().abs() - 1.0).abs().maxCoeff();
        w = w_next;
        if (change < tol) {
            converged = true;
            break;
        }
    }
    t.iterations = iter;
    t.converged = converged;
    t.unmixing = converged ? Eigen::MatrixXd(w * t.whitening) : t.whitening;
    return t;
}

// ---- regressor ---------------------------------------------------------------

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Regressor {
    Eigen::VectorXd weights;
    double bias = 0.0;
    double learning_rate = 1e-3;
    std::int64_t epochs = 5000;
    std::uint64_t seed = 0;
    double final_mse = 0.0;

    double predict(const Eigen::VectorXd& x) const { return sigmoid(weights.dot(x) + bias); }
};

/// Mean squared error of sigmoid(X w + b) against y.
inline double regressor_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& w, double b) {
    const Eigen::ArrayXd p = 1.0 / (1.0 + (-(x * w).array() - b).exp());
    return (p - y.array()).square().mean();
}

/// Analytic gradient of regressor_loss in (w, b).
inline std::pair<Eigen::VectorXd, double> regressor_gradient(const Eigen::MatrixXd& x,
                                                             const Eigen::VectorXd& y,
                                                             const Eigen::VectorXd& w, double b) {
    const double m = static_cast<double>(x.rows());
    const Eigen::ArrayXd p = 1.0 / (1.0 + (-(x * w).array() - b).exp());
    const Eigen::ArrayXd dz = 2.0 / m * (p - y.array()) * p * (1.0 - p);
    return {x.transpose() * dz.matrix(), dz.sum()};
}

/// Full-batch Adam on MSE, zero-initialized. Deterministic given inputs.
inline Regressor train_regressor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 double learning_rate = 1e-3, std::int64_t epochs = 5000,
                                 std::uint64_t seed = 0) {
    if (x.rows() < 1)
        throw input_error("train_regressor: need at least one sample");
    if (x.rows() != y.size())
        throw input_error("train_regressor: feature/target length mismatch");
    if (!x.allFinite() || !y.allFinite())
        throw input_error("train_regressor: non-finite inputs");

    Regressor reg;
    reg.weights = Eigen::VectorXd::Zero(x.cols());
    reg.learning_rate = learning_rate;
    reg.epochs = epochs;
    reg.seed = seed;

    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    Eigen::VectorXd m_w = Eigen::VectorXd::Zero(x.cols());
    Eigen::VectorXd v_w = Eigen::VectorXd::Zero(x.cols());
    double m_b = 0.0, v_b = 0.0;
    double pow_b1 = 1.0, pow_b2 = 1.0;

    for (std::int64_t t = 1; t <= epochs; ++t) {
        const auto [grad_w, grad_b] = regressor_gradient(x, y, reg.weights, reg.bias);
        pow_b1 *= beta1;
        pow_b2 *= beta2;
        m_w = beta1 * m_w + (1.0 - beta1) * grad_w;
        v_w = (beta2 * v_w.array() + (1.0 - beta2) * grad_w.array().square()).matrix();
        m_b = beta1 * m_b + (1.0 - beta1) * grad_b;
        v_b = beta2 * v_b + (1.0 - beta2) * grad_b * grad_b;
        const Eigen::ArrayXd m_hat = m_w.array() / (1.0 - pow_b1);
        const Eigen::ArrayXd v_hat = v_w.array() / (1.0 - pow_b2);
        reg.weights -= (learning_rate * m_hat / (v_hat.sqrt() + eps)).matrix();
        reg.bias -= learning_rate * (m_b / (1.0 - pow_b1)) / (std::sqrt(v_b / (1.0 - pow_b2)) + eps);
    }
    reg.final_mse = regressor_loss(x, y, reg.weights, reg.bias);
    return reg;
}

// ---- leave-one-family-out ------------------------------------------------------

struct LofoReport {
    struct Entry {
        std::string model_id;
        std::string family;
        double truth = 0.0;
        double predicted = 0.0;
    };
    struct FamilyResult {
        std::optional<double> r;
        std::size_t scored = 0;
        std::vector<std::string> train_ids; // fit-set inspection: hygiene is assertable
        bool ica_converged = true;
    };

    std::string benchmark;
    int k = 15;
    std::uint64_t seed = 0;
    std::vector<Entry> entries;
    std::map<std::string, FamilyResult> families;
    std::optional<double> overall_r;
    std::vector<std::string> warnings;
};

/// Fit on all families but one, predict the held-out family, repeat.
/// Models without a score for the benchmark are skipped on both sides.
inline LofoReport lofo_evaluate(const SimilarityMatrix& s, const BenchmarkTable& table,
                                const std::string& benchmark, int k = 15, std::uint64_t seed = 0,
                                double learning_rate = 1e-3, std::int64_t epochs = 5000) {
    LofoReport report;
    report.benchmark = benchmark;
    report.k = k;
    report.seed = seed;

    struct Scored {
        std::string id;
        std::string family;
        double score;
        std::size_t row;
    };
    std::vector<Scored> scored;
    for (std::size_t i = 0; i < s.model_ids.size(); ++i) {
        const auto& id = s.model_ids[i];
        const auto it = table.rows.find(id);
        if (it == table.rows.end()) {
            report.warnings.push_back("model " + id + " missing from the benchmark table; skipped");
            continue;
        }
        const auto score = it->second.scores.find(benchmark);
        if (score == it->second.scores.end())
            continue; // missing score: excluded from fitting and prediction
        scored.push_back({id, it->second.family, score->second, i});
    }

    std::set<std::string> family_names;
    for (const auto& m : scored)
        family_names.insert(m.family);
    if (family_names.size() < 2)
        throw input_error("lofo_evaluate: benchmark '" + benchmark + "' needs scored models in at "
                          "least 2 families, found " + std::to_string(family_names.size()));

    const auto n = static_cast<Eigen::Index>(s.size());
    const auto feature_row = [&](std::size_t row_idx) {
        Eigen::VectorXd x(n);
        for (Eigen::Index j = 0; j < n; ++j)
            x(j) = s.at(row_idx, static_cast<std::size_t>(j));
        return x;
    };

    for (const auto& family : family_names) {
        std::vector<const Scored*> train, test;
        for (const auto& m : scored)
            (m.family == family ? test : train).push_back(&m);
        if (test.empty()) {
            report.warnings.push_back("family " + family + " has no scored models; skipped");
            continue;
        }

        Eigen::MatrixXd x_train(static_cast<Eigen::Index>(train.size()), n);
        Eigen::VectorXd y_train(static_cast<Eigen::Index>(train.size()));
        LofoReport::FamilyResult fam;
        for (std::size_t i = 0; i < train.size(); ++i) {
            x_train.row(static_cast<Eigen::Index>(i)) = feature_row(train[i]->row).transpose();
            y_train(static_cast<Eigen::Index>(i)) = train[i]->score;
            fam.train_ids.push_back(train[i]->id);
        }

        const std::uint64_t family_seed = mix64(seed ^ stable_hash64(family));
        const IcaTransform ica = fit_ica(x_train, k, family_seed);
        fam.ica_converged = ica.converged;
        if (!ica.converged)
            report.warnings.push_back("family " + family + ": ICA did not converge; "
                                      "whitening-only transform used");
        const Regressor reg =
            train_regressor(ica.apply(x_train), y_train, learning_rate, epochs, family_seed);

        std::vector<double> truths, preds;
        for (const auto* m : test) {
            const double p = reg.predict(ica.apply_one(feature_row(m->row)));
            report.entries.push_back({m->id, m->family, m->score, p});
            truths.push_back(m->score);
            preds.push_back(p);
        }
        fam.scored = test.size();
        fam.r = truths.size() >= 2 ? pearson(truths, preds) : std::nullopt;
        report.families[family] = std::move(fam);
    }

    if (report.entries.size() >= 2) {
        std::vector<double> truths, preds;
        for (const auto& e : report.entries) {
            truths.push_back(e.truth);
            preds.push_back(e.predicted);
        }
        report.overall_r = pearson(truths, preds);
    }
    return report;
}

inline std::string lofo_report_to_string(const LofoReport& report) {
    const auto r_or_status = [](const std::optional<double>& r) -> nlohmann::json {
        if (r)
            return *r;
        return "undefined (zero variance)";
    };
    nlohmann::json families = nlohmann::json::object();
    for (const auto& [name, fam] : report.families)
        families[name] = {{"r", r_or_status(fam.r)},
                          {"scored", fam.scored},
                          {"ica_converged", fam.ica_converged},
                          {"train_ids", fam.train_ids}};
    nlohmann::json models = nlohmann::json::array();
    for (const auto& e : report.entries)
        models.push_back({{"id", e.model_id},
                          {"family", e.family},
                          {"true", e.truth},
                          {"predicted", e.predicted}});
    return nlohmann::json{{"benchmark", report.benchmark},
                          {"k", report.k},
                          {"seed", report.seed},
                          {"overall_r", r_or_status(report.overall_r)},
                          {"families", std::move(families)},
                          {"models", std::move(models)},
                          {"warnings", report.warnings}}
        .dump(2);
}

inline void save_lofo_report(const LofoReport& report, const std::filesystem::path& path) {
    atomic_write_file(path, lofo_report_to_string(report));
}

} // namespace lmphylo
