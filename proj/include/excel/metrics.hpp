#pragma once

// Threshold-free and fixed-operating-point separation metrics. ID samples are
// the positive class throughout: TPR is the fraction of ID samples accepted,
// FPR the fraction of OOD samples accepted. Results are percentages.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "excel/error.hpp"
#include "excel/logit_store.hpp"

namespace excel {

namespace detail {

inline void require_non_empty(std::span<const double> id, std::span<const double> ood) {
    if (id.empty() || ood.empty()) throw EmptyInput("metrics need at least one ID and one OOD score");
}

}  // namespace detail

// Mann-Whitney form: P(id > ood) + 0.5 P(id == ood), in percent. O(n log n).
inline double auroc(std::span<const double> id, std::span<const double> ood) {
    detail::require_non_empty(id, ood);
    std::vector<std::pair<double, bool>> all;
    all.reserve(id.size() + ood.size());
    for (double s : id) all.emplace_back(s, true);
    for (double s : ood) all.emplace_back(s, false);
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

    // Twice the U statistic, kept integral so ties stay exact.
    std::int64_t twice_u = 0;
    std::int64_t ood_below = 0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        std::int64_t id_here = 0, ood_here = 0;
        for (; j < all.size() && all[j].first == all[i].first; ++j) (all[j].second ? id_here : ood_here)++;
        twice_u += 2 * id_here * ood_below + id_here * ood_here;
        ood_below += ood_here;
        i = j;
    }
    const std::int64_t pairs = static_cast<std::int64_t>(id.size()) * static_cast<std::int64_t>(ood.size());
    // 50 + 50 t with t in [-1, 1]; swapping the roles of id and ood negates t exactly.
    const double t = static_cast<double>(twice_u - pairs) / static_cast<double>(pairs);
    return 50.0 + 50.0 * t;
}

// Largest observed ID score that still accepts at least `tpr_target` of the ID set.
inline double threshold_at_tpr(std::span<const double> id, double tpr_target = 0.95) {
    if (id.empty()) throw EmptyInput("threshold_at_tpr needs ID scores");
    if (!(tpr_target > 0.0 && tpr_target <= 1.0)) throw InvalidArgument("tpr_target must lie in (0, 1]");
    std::vector<double> sorted(id.begin(), id.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double n = static_cast<double>(sorted.size());
    std::size_t k = 1;
    while (static_cast<double>(k) / n < tpr_target) ++k;
    return sorted[k - 1];
}

// OOD acceptance rate (percent) at the threshold from threshold_at_tpr. Ties count as accepted.
inline double fpr_at_tpr(std::span<const double> id, std::span<const double> ood, double tpr_target = 0.95) {
    detail::require_non_empty(id, ood);
    const double lambda = threshold_at_tpr(id, tpr_target);
    const auto accepted = std::count_if(ood.begin(), ood.end(), [&](double s) { return s >= lambda; });
    return 100.0 * static_cast<double>(accepted) / static_cast<double>(ood.size());
}

// ---------------------------------------------------------------------------
// Reports

struct MetricPair {
    double auroc = 0.0;
    double fpr95 = 0.0;
};

struct DatasetResult {
    std::string name;
    OodGroup group = OodGroup::near;
    MetricPair metrics;
};

struct DetectionReport {
    std::string method;
    std::vector<DatasetResult> datasets;  // manifest order
    std::optional<MetricPair> near;
    std::optional<MetricPair> far;
    std::optional<MetricPair> overall;  // mean of near and far; only when both exist
    std::vector<std::string> warnings;

    // Overall when available, otherwise the single group that is present.
    MetricPair headline() const {
        if (overall) return *overall;
        if (near) return *near;
        if (far) return *far;
        throw EmptyInput("report for '" + method + "' has no OOD results");
    }
};

// Fills the near/far/overall aggregates from the per-dataset results.
inline void aggregate(DetectionReport& report) {
    auto group_mean = [&](OodGroup g) -> std::optional<MetricPair> {
        MetricPair sum;
        std::size_t n = 0;
        for (const auto& d : report.datasets) {
            if (d.group != g) continue;
            sum.auroc += d.metrics.auroc;
            sum.fpr95 += d.metrics.fpr95;
            ++n;
        }
        if (n == 0) return std::nullopt;
        return MetricPair{sum.auroc / static_cast<double>(n), sum.fpr95 / static_cast<double>(n)};
    };
    report.near = group_mean(OodGroup::near);
    report.far = group_mean(OodGroup::far);
    report.overall.reset();
    if (report.near && report.far) {
        report.overall = MetricPair{(report.near->auroc + report.far->auroc) / 2.0,
                                    (report.near->fpr95 + report.far->fpr95) / 2.0};
    } else {
        report.warnings.push_back(std::string("no ") + (report.near ? "far" : "near") +
                                  "-OOD datasets; overall aggregate omitted");
    }
}

struct OodScores {
    std::string name;
    OodGroup group = OodGroup::near;
    std::vector<double> scores;
};

inline DetectionReport evaluate(const std::string& method, std::span<const double> id_scores,
                                const std::vector<OodScores>& ood, double tpr_target = 0.95) {
    if (ood.empty()) throw EmptyInput("evaluate needs at least one OOD set");
    DetectionReport report;
    report.method = method;
    for (const auto& set : ood)
        report.datasets.push_back(
            {set.name, set.group, {auroc(id_scores, set.scores), fpr_at_tpr(id_scores, set.scores, tpr_target)}});
    aggregate(report);
    return report;
}

inline nlohmann::ordered_json to_json(const MetricPair& m) {
    return {{"auroc", m.auroc}, {"fpr95", m.fpr95}};
}

inline nlohmann::ordered_json to_json(const DetectionReport& r) {
    nlohmann::ordered_json j;
    j["method"] = r.method;
    nlohmann::ordered_json datasets = nlohmann::ordered_json::object();
    for (const auto& d : r.datasets) {
        auto entry = to_json(d.metrics);
        entry["group"] = to_string(d.group);
        datasets[d.name] = entry;
    }
    j["datasets"] = datasets;
    if (r.near) j["near"] = to_json(*r.near);
    if (r.far) j["far"] = to_json(*r.far);
    if (r.overall) j["overall"] = to_json(*r.overall);
    return j;
}

// ---------------------------------------------------------------------------
// Method ranking

struct RankEntry {
    std::string method;
    double overall_auroc = 0.0;
    double overall_fpr95 = 0.0;
    double auroc_rank = 0.0;
    double fpr95_rank = 0.0;
    double mean_overall_rank = 0.0;
};

struct RankTable {
    std::vector<RankEntry> entries;  // input order
};

// 1 + (#strictly better) + (#tied others) / 2, i.e. the average of the tied positions.
inline std::vector<double> average_ranks(const std::vector<double>& values, bool higher_is_better) {
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::size_t better = 0, tied = 0;
        for (std::size_t j = 0; j < values.size(); ++j) {
            if (i == j) continue;
            if (values[j] == values[i]) ++tied;
            else if (higher_is_better ? values[j] > values[i] : values[j] < values[i]) ++better;
        }
        ranks[i] = 1.0 + static_cast<double>(better) + static_cast<double>(tied) / 2.0;
    }
    return ranks;
}

inline RankTable rank_from_metrics(const std::vector<std::pair<std::string, MetricPair>>& overall) {
    std::vector<double> aurocs, fprs;
    for (const auto& [_, m] : overall) {
        aurocs.push_back(m.auroc);
        fprs.push_back(m.fpr95);
    }
    const auto ra = average_ranks(aurocs, true);
    const auto rf = average_ranks(fprs, false);
    RankTable table;
    for (std::size_t i = 0; i < overall.size(); ++i)
        table.entries.push_back({overall[i].first, aurocs[i], fprs[i], ra[i], rf[i], (ra[i] + rf[i]) / 2.0});
    return table;
}

inline RankTable rank_methods(const std::vector<DetectionReport>& reports) {
    if (reports.empty()) throw EmptyInput("rank_methods needs at least one report");
    std::vector<std::pair<std::string, MetricPair>> overall;
    for (const auto& r : reports) overall.emplace_back(r.method, r.headline());
    return rank_from_metrics(overall);
}

inline nlohmann::ordered_json to_json(const RankTable& t) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& e : t.entries)
        rows.push_back({{"method", e.method},
                        {"overall_auroc", e.overall_auroc},
                        {"overall_fpr95", e.overall_fpr95},
                        {"auroc_rank", e.auroc_rank},
                        {"fpr95_rank", e.fpr95_rank},
                        {"mean_overall_rank", e.mean_overall_rank}});
    return {{"methods", rows}};
}

// Near / Far / Overall for AUROC and FPR95 with overall ranks in brackets,
// then the mean overall rank. Two decimals throughout.
inline std::string render_table(const std::vector<DetectionReport>& reports, const RankTable& table) {
    auto fmt = [](const std::optional<MetricPair>& m, bool fpr) -> std::string {
        if (!m) return "-";
        std::ostringstream os;
        os << std::fixed << std::setprecision(2) << (fpr ? m->fpr95 : m->auroc);
        return os.str();
    };
    auto fmt_rank = [](double r) {
        std::ostringstream os;
        if (r == static_cast<double>(static_cast<long long>(r))) os << static_cast<long long>(r);
        else os << std::fixed << std::setprecision(1) << r;
        return os.str();
    };

    std::vector<std::vector<std::string>> rows;
    rows.push_back({"Method", "AUROC near", "AUROC far", "AUROC overall", "FPR95 near", "FPR95 far",
                    "FPR95 overall", "Mean overall rank"});
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        const auto& e = table.entries[i];
        rows.push_back({r.method, fmt(r.near, false), fmt(r.far, false),
                        fmt(r.overall, false) + " (" + fmt_rank(e.auroc_rank) + ")", fmt(r.near, true),
                        fmt(r.far, true), fmt(r.overall, true) + " (" + fmt_rank(e.fpr95_rank) + ")",
                        fmt_rank(e.mean_overall_rank)});
    }
    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

    std::ostringstream os;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c == 0) os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
            else os << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace excel
