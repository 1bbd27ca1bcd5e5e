#pragma once

// Per-sample OOD scores. Every method follows the same orientation: a higher
// score means the sample looks more in-distribution.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "excel/clm.hpp"
#include "excel/error.hpp"
#include "excel/logit_store.hpp"
#include "excel/ranking.hpp"

namespace excel {

enum class Method { excel, rankscore, maxlogit, msp, energy, tempscale };

inline constexpr std::string_view method_name(Method m) {
    switch (m) {
        case Method::excel: return "excel";
        case Method::rankscore: return "rankscore";
        case Method::maxlogit: return "maxlogit";
        case Method::msp: return "msp";
        case Method::energy: return "energy";
        case Method::tempscale: return "tempscale";
    }
    return "";
}

inline constexpr Method all_methods[] = {Method::excel,  Method::rankscore, Method::maxlogit,
                                         Method::msp,    Method::energy,    Method::tempscale};

inline std::optional<Method> find_method(std::string_view name) {
    for (auto m : all_methods)
        if (method_name(m) == name) return m;
    return std::nullopt;
}

inline Method parse_method(std::string_view name) {
    if (auto m = find_method(name)) return *m;
    throw InvalidArgument("unknown scoring method '" + std::string(name) +
                          "' (expected excel, rankscore, maxlogit, msp, energy or tempscale)");
}

inline bool needs_clm(Method m) { return m == Method::excel || m == Method::rankscore; }

struct ExcelParams {
    double alpha = 0.8;  // weight of the rank score; 1 - alpha goes to the max logit

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw InvalidArgument("alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
};

// Sum over ranks of the top-1 class's smoothed likelihood for the class found
// at that rank. Includes the constant rank-1 term.
inline double rank_score(std::span<const double> logits, const SmoothedClmSet& clms) {
    const std::size_t C = clms.num_classes();
    if (logits.size() != C)
        throw DimensionMismatch("logit vector has " + std::to_string(logits.size()) + " classes, CLM set has " +
                                std::to_string(C));
    const auto perm = rank_classes(logits);
    const auto table = clms.smoothed(perm.top());
    double total = 0.0;
    for (std::size_t rank = 0; rank < C; ++rank) total += table(perm[rank], rank);
    return total;
}

// trace(smoothed^T * one_hot), accumulated column by column.
inline double rank_score_trace(const OneHotRankingMatrix& one_hot, const MatrixView& smoothed) {
    const std::size_t C = smoothed.size;
    if (one_hot.size != C) throw DimensionMismatch("ranking matrix and likelihood matrix differ in size");
    double total = 0.0;
    for (std::size_t rank = 0; rank < C; ++rank) {
        double diag = 0.0;
        for (std::size_t cls = 0; cls < C; ++cls) diag += smoothed(cls, rank) * one_hot(cls, rank);
        total += diag;
    }
    return total;
}

inline double max_logit(std::span<const double> logits) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logits) m = std::max(m, v);
    return m;
}

inline double excel_score(std::span<const double> logits, const SmoothedClmSet& clms, const ExcelParams& params) {
    params.validate();
    return params.alpha * rank_score(logits, clms) + (1.0 - params.alpha) * max_logit(logits);
}

namespace detail {

// max softmax(logits / temperature), shifted by the max logit for stability.
inline double max_softmax(std::span<const double> logits, double temperature) {
    const double m = max_logit(logits);
    double sum = 0.0;
    for (double v : logits) sum += std::exp((v - m) / temperature);
    return 1.0 / sum;
}

}  // namespace detail

inline double msp_score(std::span<const double> logits) { return detail::max_softmax(logits, 1.0); }

// Negative free energy, T * logsumexp(logits / T).
inline double energy_score(std::span<const double> logits, double temperature = 1.0) {
    if (!(temperature > 0.0)) throw InvalidArgument("energy temperature must be positive");
    const double m = max_logit(logits);
    double sum = 0.0;
    for (double v : logits) sum += std::exp((v - m) / temperature);
    return m + temperature * std::log(sum);
}

inline double tempscale_score(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
    return detail::max_softmax(logits, temperature);
}

// 41 log-spaced temperatures from 1 to 1000.
inline std::vector<double> default_temperature_grid() {
    std::vector<double> grid(41);
    for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = std::pow(10.0, 3.0 * static_cast<double>(k) / 40.0);
    return grid;
}

// Mean negative log-likelihood of the labels under softmax(logits / T).
inline double temperature_nll(const LogitMatrix& logits, const LabelVector& labels, double temperature) {
    double total = 0.0;
    for (std::size_t n = 0; n < logits.num_samples(); ++n) {
        const auto row = logits.row(n);
        const double m = max_logit(row);
        double sum = 0.0;
        for (double v : row) sum += std::exp((v - m) / temperature);
        total += std::log(sum) - (row[labels[n]] - m) / temperature;
    }
    return total / static_cast<double>(logits.num_samples());
}

// Grid minimiser of the validation NLL; the smallest temperature wins ties.
inline double fit_temperature(const LogitMatrix& val_logits, const LabelVector& val_labels,
                              const std::vector<double>& grid = default_temperature_grid()) {
    check_labels(val_labels, val_logits.num_samples(), val_logits.num_classes());
    if (grid.empty()) throw InvalidArgument("temperature grid is empty");
    double best_t = grid.front();
    double best_nll = std::numeric_limits<double>::infinity();
    for (double t : grid) {
        if (!(t > 0.0)) throw InvalidArgument("temperature grid values must be positive");
        const double nll = temperature_nll(val_logits, val_labels, t);
        if (nll < best_nll || (nll == best_nll && t < best_t)) {
            best_nll = nll;
            best_t = t;
        }
    }
    return best_t;
}

struct ScoringContext {
    const SmoothedClmSet* clms = nullptr;
    ExcelParams excel;
    std::optional<double> temperature;  // tempscale only
    double energy_temperature = 1.0;
};

inline double score_one(std::span<const double> logits, Method method, const ScoringContext& ctx) {
    switch (method) {
        case Method::excel: return excel_score(logits, *ctx.clms, ctx.excel);
        case Method::rankscore: return rank_score(logits, *ctx.clms);
        case Method::maxlogit: return max_logit(logits);
        case Method::msp: return msp_score(logits);
        case Method::energy: return energy_score(logits, ctx.energy_temperature);
        case Method::tempscale: return tempscale_score(logits, *ctx.temperature);
    }
    return 0.0;
}

inline ScoreVector score_matrix(const LogitMatrix& matrix, Method method, const ScoringContext& ctx = {}) {
    if (needs_clm(method)) {
        if (ctx.clms == nullptr)
            throw MissingContext("method '" + std::string(method_name(method)) + "' needs a fitted CLM set");
        if (ctx.clms->num_classes() != matrix.num_classes())
            throw DimensionMismatch("logits have " + std::to_string(matrix.num_classes()) +
                                    " classes but the CLM set has " + std::to_string(ctx.clms->num_classes()));
    }
    if (method == Method::tempscale && !ctx.temperature)
        throw MissingContext("method 'tempscale' needs a temperature (given or fitted)");
    if (method == Method::excel) ctx.excel.validate();

    ScoreVector out{std::string(method_name(method)), std::vector<double>(matrix.num_samples())};
    for (std::size_t n = 0; n < matrix.num_samples(); ++n) out.scores[n] = score_one(matrix.row(n), method, ctx);
    return out;
}

enum class Decision { out, in };

struct DetectionDecision {
    double threshold = 0.0;
    std::vector<Decision> labels;
};

// "in" iff score >= threshold.
inline DetectionDecision decide(const ScoreVector& scores, double threshold) {
    DetectionDecision d{threshold, {}};
    d.labels.reserve(scores.size());
    for (double s : scores.scores) d.labels.push_back(s >= threshold ? Decision::in : Decision::out);
    return d;
}

}  // namespace excel
