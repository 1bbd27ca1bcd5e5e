#pragma once

// Exhaustive grid search over (a, b, alpha) on validation data.

#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "excel/clm.hpp"
#include "excel/error.hpp"
#include "excel/logit_store.hpp"
#include "excel/metrics.hpp"
#include "excel/scoring.hpp"

namespace excel {

enum class Objective { overall_auroc, overall_fpr95_negated, near_auroc };

inline std::string_view objective_name(Objective o) {
    switch (o) {
        case Objective::overall_auroc: return "overall_auroc";
        case Objective::overall_fpr95_negated: return "overall_fpr95_negated";
        case Objective::near_auroc: return "near_auroc";
    }
    return "";
}

inline Objective parse_objective(std::string_view s) {
    for (auto o : {Objective::overall_auroc, Objective::overall_fpr95_negated, Objective::near_auroc})
        if (objective_name(o) == s) return o;
    throw InvalidArgument("unknown objective '" + std::string(s) + "'");
}

struct GridSpec {
    std::vector<double> a_values{2, 5, 10, 20};
    std::vector<double> b_values{2, 3, 5, 10};
    std::vector<double> alpha_values{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    Objective objective = Objective::overall_auroc;

    std::size_t size() const { return a_values.size() * b_values.size() * alpha_values.size(); }

    void validate() const {
        if (a_values.empty() || b_values.empty() || alpha_values.empty())
            throw InvalidArgument("grid lists must be non-empty");
        for (double a : a_values) SmoothingParams{a, 2.0}.validate();
        for (double b : b_values) SmoothingParams{2.0, b}.validate();
        for (double alpha : alpha_values) ExcelParams{alpha}.validate();
    }
};

// {"a": [...], "b": [...], "alpha": [...], "objective": "..."}; missing keys keep the defaults.
inline GridSpec grid_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object()) throw InvalidArgument("grid must be a JSON object");
        GridSpec g;
        if (j.contains("a")) g.a_values = j.at("a").get<std::vector<double>>();
        if (j.contains("b")) g.b_values = j.at("b").get<std::vector<double>>();
        if (j.contains("alpha")) g.alpha_values = j.at("alpha").get<std::vector<double>>();
        if (j.contains("objective")) g.objective = parse_objective(j.at("objective").get<std::string>());
        g.validate();
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedFile(std::string("grid: ") + e.what());
    }
}

struct TunePoint {
    double a = 0.0;
    double b = 0.0;
    double alpha = 0.0;
    double objective = 0.0;
};

struct TuneResult {
    TunePoint best;
    std::vector<TunePoint> trace;  // a-major, then b, then alpha, in grid order
    std::size_t fit_count = 0;     // smoothed CLM sets built; one per (a, b)
};

struct ValidationOod {
    std::string name;
    OodGroup group = OodGroup::near;
    LogitMatrix logits;
};

inline double objective_value(const DetectionReport& report, Objective objective) {
    switch (objective) {
        case Objective::overall_auroc: return report.headline().auroc;
        case Objective::overall_fpr95_negated: return -report.headline().fpr95;
        case Objective::near_auroc:
            if (!report.near) throw InvalidArgument("near_auroc objective needs a near-OOD validation set");
            return report.near->auroc;
    }
    return 0.0;
}

namespace detail {

// Ties go to the smallest alpha, then a, then b.
inline bool better_point(const TunePoint& cand, const TunePoint& best) {
    if (cand.objective != best.objective) return cand.objective > best.objective;
    return std::tie(cand.alpha, cand.a, cand.b) < std::tie(best.alpha, best.a, best.b);
}

}  // namespace detail

inline TuneResult tune(const LogitMatrix& train_logits, const LabelVector& train_labels, const LogitMatrix& val_id,
                       const std::vector<ValidationOod>& val_ood, const GridSpec& grid) {
    grid.validate();
    if (val_ood.empty()) throw EmptyInput("tune needs at least one validation OOD set");
    const std::size_t C = train_logits.num_classes();
    if (val_id.num_classes() != C) throw DimensionMismatch("validation ID logits disagree on the class count");
    for (const auto& o : val_ood)
        if (o.logits.num_classes() != C)
            throw DimensionMismatch("validation OOD set '" + o.name + "' disagrees on the class count");

    // Class-at-rank counts do not depend on (a, b): count once, re-smooth per pair.
    const auto counted = fit(train_logits, train_labels, SmoothingParams{grid.a_values.front(), grid.b_values.front()});

    const auto id_max = score_matrix(val_id, Method::maxlogit).scores;
    std::vector<std::vector<double>> ood_max;
    for (const auto& o : val_ood) ood_max.push_back(score_matrix(o.logits, Method::maxlogit).scores);

    TuneResult result;
    bool have_best = false;
    std::vector<double> id_mix(id_max.size());
    std::vector<OodScores> ood_mix(val_ood.size());
    for (std::size_t k = 0; k < val_ood.size(); ++k) {
        ood_mix[k].name = val_ood[k].name;
        ood_mix[k].group = val_ood[k].group;
        ood_mix[k].scores.resize(ood_max[k].size());
    }

    for (double a : grid.a_values) {
        for (double b : grid.b_values) {
            const auto clms = resmooth(counted, SmoothingParams{a, b});
            ++result.fit_count;
            ScoringContext ctx;
            ctx.clms = &clms;
            const auto id_rs = score_matrix(val_id, Method::rankscore, ctx).scores;
            std::vector<std::vector<double>> ood_rs;
            for (const auto& o : val_ood) ood_rs.push_back(score_matrix(o.logits, Method::rankscore, ctx).scores);

            for (double alpha : grid.alpha_values) {
                // Same expression as excel_score, so the trace is reproducible from the returned params.
                for (std::size_t n = 0; n < id_mix.size(); ++n)
                    id_mix[n] = alpha * id_rs[n] + (1.0 - alpha) * id_max[n];
                for (std::size_t k = 0; k < val_ood.size(); ++k)
                    for (std::size_t n = 0; n < ood_mix[k].scores.size(); ++n)
                        ood_mix[k].scores[n] = alpha * ood_rs[k][n] + (1.0 - alpha) * ood_max[k][n];

                const auto report = evaluate("excel", id_mix, ood_mix);
                const TunePoint point{a, b, alpha, objective_value(report, grid.objective)};
                result.trace.push_back(point);
                if (!have_best || detail::better_point(point, result.best)) {
                    result.best = point;
                    have_best = true;
                }
            }
        }
    }
    return result;
}

inline nlohmann::ordered_json to_json(const TuneResult& r, Objective objective) {
    nlohmann::ordered_json trace = nlohmann::ordered_json::array();
    for (const auto& p : r.trace) trace.push_back({{"a", p.a}, {"b", p.b}, {"alpha", p.alpha}, {"objective", p.objective}});
    return {{"best", {{"a", r.best.a}, {"b", r.best.b}, {"alpha", r.best.alpha}}},
            {"objective", objective_name(objective)},
            {"objective_value", r.best.objective},
            {"fit_count", r.fit_count},
            {"trace", trace}};
}

}  // namespace excel
