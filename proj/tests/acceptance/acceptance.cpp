// Acceptance gate: one PASS/FAIL line per criterion. Tolerances are fixed
// here and must not be loosened to make a run pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "excel/excel.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace excel;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) detail = why;
        pass = false;
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << std::fixed << v;
    return os.str();
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

SmoothedClmSet random_fitted_set(std::mt19937_64& rng, std::size_t C, SmoothingParams p) {
    std::vector<std::vector<double>> rows;
    std::vector<std::int64_t> labels;
    for (std::size_t n = 0; n < 20 * C; ++n) {
        rows.push_back(oracle::random_logits(rng, C));
        labels.push_back(static_cast<std::int64_t>(oracle::selection_ranking(rows.back())[0]));
    }
    return fit(matrix_from_rows(rows), LabelVector{labels}, p);
}

// Arbitrary real-valued tensor, not restricted to the four smoothing levels.
SmoothedClmSet random_real_set(std::mt19937_64& rng, std::size_t C) {
    std::normal_distribution<double> normal(0.0, 3.0);
    std::vector<double> tensor(C * C * C);
    for (auto& x : tensor) x = normal(rng);
    return SmoothedClmSet(C, SmoothingParams{}, tensor, std::vector<std::uint64_t>(C, 1), {});
}

SmoothedClmSet uniform_set(std::size_t C, SmoothingParams p) {
    std::vector<double> tensor;
    std::vector<std::uint32_t> fallback;
    for (std::uint32_t c = 0; c < C; ++c) {
        const auto s = smooth(uniform_clm(C, c), p);
        tensor.insert(tensor.end(), s.begin(), s.end());
        fallback.push_back(c);
    }
    return SmoothedClmSet(C, p, tensor, std::vector<std::uint64_t>(C, 0), fallback);
}

// ---------------------------------------------------------------------------

Outcome trace_equivalence() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::size_t pairs = 0;
    SmoothedClmSet set;
    for (std::size_t C : {3u, 8u, 50u}) {
        for (int k = 0; k < 334; ++k) {
            // Fresh CLM set every 10 pairs; alternate fitted and arbitrary real tensors.
            if (k % 10 == 0) set = (k / 10) % 2 ? random_real_set(rng, C) : random_fitted_set(rng, C, {10, 2});
            const auto v = oracle::random_logits(rng, C);
            const auto perm = rank_classes(v);
            const double direct = rank_score(v, set);
            const double trace = rank_score_trace(to_one_hot(perm), set.smoothed(perm.top()));
            if (direct != trace) o.fail("mismatch at C=" + std::to_string(C) + ": " + fmt(direct, 17) + " vs " + fmt(trace, 17));
            ++pairs;
        }
    }
    const double secs = seconds_since(t0);
    if (pairs < 1000) o.fail("only " + std::to_string(pairs) + " pairs");
    if (secs >= 5.0) o.fail("runtime " + fmt(secs) + " s >= 5 s");
    if (o.pass) o.detail = std::to_string(pairs) + " pairs bit-identical, " + fmt(secs, 3) + " s";
    return o;
}

Outcome clm_oracle() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<std::size_t> dimN(1, 50), dimC(2, 8);
    std::size_t classes_checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t N = dimN(rng), C = dimC(rng);
        std::uniform_int_distribution<std::int64_t> lab(0, static_cast<std::int64_t>(C) - 1);
        std::vector<std::vector<double>> rows;
        std::vector<std::int64_t> labels;
        for (std::size_t n = 0; n < N; ++n) {
            rows.push_back(oracle::random_logits(rng, C));
            labels.push_back(rng() % 3 ? static_cast<std::int64_t>(oracle::selection_ranking(rows.back())[0]) : lab(rng));
        }
        const auto logits = matrix_from_rows(rows);
        const LabelVector lv{labels};
        for (std::uint32_t c = 0; c < C; ++c) {
            const auto m = build_clm(logits, lv, c);
            const auto [ref, support] = oracle::brute_force_clm(rows, labels, c);
            if (m.support_count != support) o.fail("support mismatch, trial " + std::to_string(trial));
            if (support == 0) {
                if (!m.fallback) o.fail("zero support without fallback, trial " + std::to_string(trial));
                continue;
            }
            ++classes_checked;
            for (std::size_t i = 0; i < C; ++i)
                for (std::size_t j = 0; j < C; ++j)
                    if (m(i, j) != ref[i][j]) o.fail("cell mismatch, trial " + std::to_string(trial));
            for (std::size_t j = 0; j < C; ++j) {
                double col = 0;
                for (std::size_t i = 0; i < C; ++i) col += m(i, j);
                if (std::fabs(col - 1.0) > 1e-9) o.fail("column sum " + fmt(col, 12) + ", trial " + std::to_string(trial));
            }
            for (std::size_t i = 0; i < C; ++i)
                if (m(i, 0) != (i == c ? 1.0 : 0.0)) o.fail("first column not one-hot, trial " + std::to_string(trial));
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 10.0) o.fail("runtime " + fmt(secs) + " s >= 10 s");
    if (o.pass) o.detail = "200 instances, " + std::to_string(classes_checked) + " supported CLMs match, " + fmt(secs, 3) + " s";
    return o;
}

Outcome smoothing_totality() {
    Outcome o;
    const SmoothingParams p{10, 5};
    std::size_t evaluated = 0;
    for (std::size_t C : {11u, 100u}) {
        const double d = static_cast<double>(C - 1);
        const double allowed[4] = {-p.a / d, -1.0 / d, 1.0 / d, p.a / d};
        auto expected = [&](double x) {
            if (x >= p.b / d) return allowed[3];
            if (x >= 1.0 / d) return allowed[2];
            if (x > 0.0) return allowed[1];
            return allowed[0];
        };
        std::vector<double> sweep;
        const int steps = 1000000;
        for (int k = 0; k <= steps; ++k) sweep.push_back(static_cast<double>(k) / steps);
        for (double edge : {1.0 / d, p.b / d, 0.0, 1.0}) {
            sweep.push_back(edge);
            sweep.push_back(std::nextafter(edge, 0.0));
            sweep.push_back(std::nextafter(edge, 1.0));
        }
        sweep.push_back(std::numeric_limits<double>::denorm_min());
        for (double x : sweep) {
            if (x < 0.0 || x > 1.0) continue;
            const double s = smooth_value(x, p, C);
            bool member = false;
            for (double a : allowed) member = member || s == a;
            if (!member) o.fail("value outside the four levels at p=" + fmt(x, 17));
            if (s != expected(x)) o.fail("boundary convention violated at p=" + fmt(x, 17) + ", C=" + std::to_string(C));
            ++evaluated;
        }
        // Boundaries are closed from below.
        if (smooth_value(p.b / d, p, C) != allowed[3] || smooth_value(1.0 / d, p, C) != allowed[2] ||
            smooth_value(0.0, p, C) != allowed[0])
            o.fail("closed lower bounds not honoured at C=" + std::to_string(C));
    }
    if (o.pass) o.detail = std::to_string(evaluated) + " points over C in {11, 100}, all four-valued";
    return o;
}

Outcome uniform_reduction() {
    Outcome o;
    const std::size_t C = 10;
    const SmoothingParams p{10, 5};
    const auto set = uniform_set(C, p);
    const double constant = p.a / static_cast<double>(C - 1) + 1.0;

    synth::SignatureModel model;
    model.num_classes = C;
    model.neighbor_map = synth::ring_neighbors(C, 3);
    model.signal_strength = 3.0;
    model.seed = 303;
    const auto id = synth::gen_id(model, 2500);
    const auto ood = synth::gen_ood(model, 2500, synth::Regime::uniform_ood);

    ScoringContext ctx;
    ctx.clms = &set;
    const auto id_ml = score_matrix(id.logits, Method::maxlogit).scores;
    const auto ood_ml = score_matrix(ood.logits, Method::maxlogit).scores;
    const double auroc_ml = auroc(id_ml, ood_ml);
    double worst = 0.0;
    for (double alpha : {0.2, 0.5, 0.8}) {
        ctx.excel.alpha = alpha;
        const auto id_ex = score_matrix(id.logits, Method::excel, ctx).scores;
        const auto ood_ex = score_matrix(ood.logits, Method::excel, ctx).scores;
        for (std::size_t n = 0; n < id_ex.size(); ++n) {
            worst = std::max(worst, std::fabs(id_ex[n] - (alpha * constant + (1 - alpha) * id_ml[n])));
            worst = std::max(worst, std::fabs(ood_ex[n] - (alpha * constant + (1 - alpha) * ood_ml[n])));
        }
        const double auroc_ex = auroc(id_ex, ood_ex);
        if (auroc_ex != auroc_ml)
            o.fail("AUROC differs at alpha=" + fmt(alpha, 1) + ": " + fmt(auroc_ex, 12) + " vs " + fmt(auroc_ml, 12));
    }
    if (worst > 1e-12) o.fail("affine residual " + sci(worst) + " > 1e-12");
    if (o.pass)
        o.detail = "5000 samples, max residual " + sci(worst) + ", AUROC " + fmt(auroc_ml, 6) + " for all alpha";
    return o;
}

Outcome metric_oracles() {
    Outcome o;
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> size(1, 200), coarse(0, 9);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> id(static_cast<std::size_t>(size(rng))), ood(static_cast<std::size_t>(size(rng)));
        const bool tied = trial % 2 == 0;
        for (auto& x : id) x = tied ? coarse(rng) + 1.0 : normal(rng) + 0.8;
        for (auto& x : ood) x = tied ? coarse(rng) : normal(rng);
        worst = std::max(worst, std::fabs(auroc(id, ood) - oracle::pairwise_auroc(id, ood)));
        if (fpr_at_tpr(id, ood) != oracle::sweep_fpr(id, ood, 0.95)) o.fail("FPR95 differs from sweep, trial " + std::to_string(trial));
    }
    if (worst > 1e-12) o.fail("AUROC deviates from pairwise oracle by " + sci(worst));

    if (auroc(std::vector<double>{3, 4, 5}, std::vector<double>{0, 1, 2}) != 100.0) o.fail("perfect separation != 100");
    std::vector<double> id20;
    for (int i = 1; i <= 20; ++i) id20.push_back(i);
    const double f = fpr_at_tpr(id20, std::vector<double>{0, 1, 3});
    if (std::fabs(f - 100.0 / 3.0) > 1e-12) o.fail("20/3 case gives " + fmt(f, 6));
    if (o.pass) o.detail = "200 instances, max AUROC deviation " + sci(worst) + ", hand cases " + fmt(f, 2) + "%";
    return o;
}

// Pinned after the first seeded run of this exact configuration.
constexpr double pinned_sparse_excel = 96.877325;
constexpr double pinned_sparse_maxlogit = 51.065;
constexpr double pinned_uniform_excel = 100.0;
constexpr double pinned_uniform_maxlogit = 100.0;
constexpr double pin_tolerance = 1e-9;

Outcome qualitative_experiment() {
    Outcome o;
    const auto t0 = Clock::now();
    synth::SignatureModel model;
    model.num_classes = 50;
    model.neighbor_map = synth::ring_neighbors(50, 4);
    model.signal_strength = 5.0;
    model.noise_scale = 1.0;
    model.seed = 2024;

    const auto train = synth::gen_id(model, 10000, 1);
    const auto id = synth::gen_id(model, 2000, 2);
    const auto sparse = synth::gen_ood(model, 2000, synth::Regime::sparse_ood, 3);
    const auto uniform = synth::gen_ood(model, 2000, synth::Regime::uniform_ood, 4);

    const auto clms = fit(train.logits, *train.labels, SmoothingParams{10, 5});
    ScoringContext ctx;
    ctx.clms = &clms;
    ctx.excel.alpha = 0.8;
    auto both = [&](const LogitMatrix& ood, Method m) {
        return auroc(score_matrix(id.logits, m, ctx).scores, score_matrix(ood, m, ctx).scores);
    };
    const double sparse_ex = both(sparse.logits, Method::excel);
    const double sparse_ml = both(sparse.logits, Method::maxlogit);
    const double uniform_ex = both(uniform.logits, Method::excel);
    const double uniform_ml = both(uniform.logits, Method::maxlogit);
    const double secs = seconds_since(t0);

    const std::string values = "sparse " + fmt(sparse_ex, 12) + " vs " + fmt(sparse_ml, 12) + ", uniform " +
                               fmt(uniform_ex, 12) + " vs " + fmt(uniform_ml, 12);
    if (sparse_ex - sparse_ml < 2.0) o.fail("sparse_ood gap " + fmt(sparse_ex - sparse_ml) + " < 2.0 (" + values + ")");
    if (std::fabs(uniform_ex - uniform_ml) > 1.0)
        o.fail("uniform_ood difference " + fmt(uniform_ex - uniform_ml) + " exceeds 1.0 (" + values + ")");
    const double pins[4] = {pinned_sparse_excel, pinned_sparse_maxlogit, pinned_uniform_excel, pinned_uniform_maxlogit};
    const double got[4] = {sparse_ex, sparse_ml, uniform_ex, uniform_ml};
    for (int k = 0; k < 4; ++k)
        if (std::fabs(pins[k] - got[k]) > pin_tolerance) o.fail("drift from pinned values (" + values + ")");
    if (secs >= 60.0) o.fail("runtime " + fmt(secs) + " s >= 60 s");
    if (o.pass)
        o.detail = "AUROC excel/maxlogit: sparse " + fmt(sparse_ex, 2) + "/" + fmt(sparse_ml, 2) + " (gap " +
                   fmt(sparse_ex - sparse_ml, 2) + "), uniform " + fmt(uniform_ex, 2) + "/" + fmt(uniform_ml, 2) + ", " +
                   fmt(secs, 2) + " s";
    return o;
}

Outcome tuner_correctness() {
    Outcome o;
    synth::SignatureModel model;
    model.num_classes = 10;
    model.neighbor_map = synth::ring_neighbors(10, 3);
    model.signal_strength = 3.0;
    model.seed = 4;
    const auto train = synth::gen_id(model, 5000, 401);
    const auto val_id = synth::gen_id(model, 2000, 402);
    const auto val_ood = synth::gen_ood(model, 2000, synth::Regime::flat_ood, 403);
    const std::vector<ValidationOod> ood{{"flat", OodGroup::near, val_ood.logits}};

    const GridSpec grid;
    const auto result = tune(train.logits, *train.labels, val_id.logits, ood, grid);

    // Exhaustive re-evaluation from scratch: fresh fit and excel scoring per grid point.
    TunePoint best{};
    bool have = false;
    std::size_t points = 0;
    for (double a : grid.a_values) {
        for (double b : grid.b_values) {
            const auto clms = fit(train.logits, *train.labels, SmoothingParams{a, b});
            for (double alpha : grid.alpha_values) {
                ScoringContext ctx;
                ctx.clms = &clms;
                ctx.excel.alpha = alpha;
                const double v = auroc(score_matrix(val_id.logits, Method::excel, ctx).scores,
                                       score_matrix(val_ood.logits, Method::excel, ctx).scores);
                const TunePoint pt{a, b, alpha, v};
                if (result.trace[points].objective != v) o.fail("trace disagrees with fresh evaluation");
                ++points;
                if (!have || detail::better_point(pt, best)) {
                    best = pt;
                    have = true;
                }
            }
        }
    }
    if (best.a != result.best.a || best.b != result.best.b || best.alpha != result.best.alpha)
        o.fail("tune returned a non-argmax point");
    if (result.best.alpha != 1.0) o.fail("selected alpha " + fmt(result.best.alpha, 1) + " instead of 1.0");

    GridSpec single;
    single.a_values = {7};
    single.b_values = {3};
    single.alpha_values = {0.4};
    const auto one = tune(train.logits, *train.labels, val_id.logits, ood, single);
    if (one.best.a != 7 || one.best.b != 3 || one.best.alpha != 0.4 || one.trace.size() != 1)
        o.fail("single-point grid did not return its point");
    if (o.pass)
        o.detail = std::to_string(points) + " grid points re-evaluated; best a=" + fmt(result.best.a, 0) + " b=" +
                   fmt(result.best.b, 0) + " alpha=" + fmt(result.best.alpha, 1) + " AUROC " + fmt(result.best.objective, 2);
    return o;
}

// Overall AUROC / FPR95 with their published ranks and mean overall rank, 22 post-hoc detectors.
struct BenchmarkRow {
    const char* method;
    double auroc;
    int auroc_rank;
    double fpr95;
    int fpr95_rank;
    double mean_rank;
};

constexpr BenchmarkRow cifar100_rows[] = {
    {"OpenMax", 77.95, 14, 55.54, 4, 9.0},    {"MSP", 79.02, 12, 56.75, 10, 11.0},
    {"TempScale", 79.82, 8, 56.22, 8, 8.0},   {"ODIN", 79.59, 10, 58.39, 13, 11.5},
    {"MDS", 64.04, 20, 77.90, 19, 19.5},      {"MDSEns", 56.16, 22, 81.31, 21, 21.5},
    {"RMDS", 81.54, 1, 54.14, 2, 1.5},        {"Gram", 62.51, 21, 78.36, 20, 20.5},
    {"EBO", 80.34, 7, 56.11, 7, 7.0},         {"OpenGAN", 66.93, 18, 73.51, 16, 17.0},
    {"GradNorm", 69.64, 17, 84.63, 22, 19.5}, {"ReAct", 80.58, 4, 55.30, 3, 3.5},
    {"KLM", 76.40, 16, 74.79, 17, 16.5},      {"VIM", 78.34, 13, 56.69, 9, 11.0},
    {"KNN", 81.29, 3, 57.44, 12, 7.5},        {"DICE", 79.70, 9, 57.10, 11, 10.0},
    {"RankFeat", 64.49, 19, 75.02, 18, 18.5}, {"ASH", 79.39, 11, 62.46, 15, 13.0},
    {"SHE", 77.94, 15, 61.60, 14, 14.5},      {"GEN", 80.50, 5, 55.57, 5, 5.0},
    {"MaxLogit", 80.36, 6, 56.10, 6, 6.0},    {"ExCeL", 81.37, 2, 53.73, 1, 1.5},
};

constexpr BenchmarkRow imagenet200_rows[] = {
    {"OpenMax", 85.24, 13, 48.30, 12, 12.5},  {"MSP", 86.74, 8, 45.13, 7, 7.5},
    {"TempScale", 87.26, 4, 44.41, 6, 5.0},   {"ODIN", 85.99, 11, 50.50, 14, 12.5},
    {"MDS", 68.33, 19, 70.39, 17, 18.0},      {"MDSEns", 61.80, 21, 86.36, 21, 21.0},
    {"RMDS", 85.32, 12, 43.24, 3, 7.5},       {"Gram", 69.43, 18, 85.38, 20, 19.0},
    {"EBO", 86.68, 9, 47.55, 11, 10.0},       {"OpenGAN", 66.47, 20, 74.16, 18, 19.0},
    {"GradNorm", 78.51, 17, 74.56, 19, 18.0}, {"ReAct", 87.09, 6, 45.50, 8, 7.0},
    {"KLM", 84.65, 16, 55.58, 16, 16.0},      {"VIM", 84.97, 15, 43.20, 2, 8.5},
    {"KNN", 87.37, 3, 43.73, 5, 4.0},         {"DICE", 86.29, 10, 49.20, 13, 11.5},
    {"RankFeat", 47.57, 22, 94.89, 22, 22.0}, {"ASH", 88.14, 1, 46.09, 9, 5.0},
    {"SHE", 85.00, 14, 54.49, 15, 14.5},      {"GEN", 87.52, 2, 43.65, 4, 3.0},
    {"MaxLogit", 87.01, 7, 46.90, 10, 8.5},   {"ExCeL", 87.19, 5, 43.18, 1, 3.0},
};

template <std::size_t N>
void check_benchmark(const BenchmarkRow (&rows)[N], const char* label, Outcome& o) {
    std::vector<std::pair<std::string, MetricPair>> overall;
    for (const auto& r : rows) overall.emplace_back(r.method, MetricPair{r.auroc, r.fpr95});
    const auto table = rank_from_metrics(overall);
    for (std::size_t i = 0; i < N; ++i) {
        const auto& e = table.entries[i];
        if (e.auroc_rank != rows[i].auroc_rank || e.fpr95_rank != rows[i].fpr95_rank ||
            e.mean_overall_rank != rows[i].mean_rank)
            o.fail(std::string(label) + " " + rows[i].method + ": got mean rank " + fmt(e.mean_overall_rank, 1) +
                   ", expected " + fmt(rows[i].mean_rank, 1));
    }
}

Outcome mean_rank_arithmetic() {
    Outcome o;
    const auto two = rank_from_metrics({{"a", {81.54, 54.14}}, {"ExCeL", {81.37, 53.73}}});
    if (two.entries[1].auroc_rank != 2 || two.entries[1].fpr95_rank != 1 || two.entries[1].mean_overall_rank != 1.5)
        o.fail("rank 2 + rank 1 did not give 1.5");
    check_benchmark(cifar100_rows, "CIFAR-100", o);
    check_benchmark(imagenet200_rows, "ImageNet-200", o);

    const auto tie = average_ranks({90.0, 90.0, 80.0}, true);
    if (tie != std::vector<double>{1.5, 1.5, 3.0}) o.fail("two-way tie not averaged");
    if (average_ranks({5, 5, 5}, false) != std::vector<double>{2, 2, 2}) o.fail("three-way tie not averaged");
    if (o.pass) o.detail = "ExCeL 2 + 1 -> 1.5; all 44 benchmark rows reproduce their ranks; ties averaged";
    return o;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(EXCEL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome determinism_round_trips() {
    Outcome o;
    TempDir dir;
    std::ofstream(dir.file("model.json")) << R"({"num_classes": 12, "ring_width": 3, "signal_strength": 4.0, "seed": 5})";
    std::ofstream(dir.file("config.json")) << R"({"manifest": "manifest.json", "output_dir": "out",
        "methods": ["excel", "maxlogit", "energy"], "a": 10, "b": 2, "alpha": 0.8})";
    std::ofstream(dir.file("manifest.json")) << R"({
        "id_train": {"logits": "train_logits.npy", "labels": "train_labels.npy"},
        "id_test": "test_logits.npy",
        "ood": [{"name": "sparse", "path": "sparse_logits.npy", "group": "near"},
                {"name": "uniform", "path": "uniform_logits.npy", "group": "far"}]})";

    // Run the full pipeline twice into separate snapshots and compare every output byte-for-byte.
    const std::vector<std::string> outputs = {"train_logits.npy", "train_labels.npy", "test_logits.npy",
                                              "sparse_logits.npy", "uniform_logits.npy", "m.clm", "m.clm.json",
                                              "s.npy", "h.csv", "out/report_excel.json", "out/rank_table.txt",
                                              "out/rank_table.json"};
    std::vector<std::string> first;
    for (int pass = 0; pass < 2; ++pass) {
        const std::string m = dir.file("model.json");
        int rc = 0;
        rc |= run_cli("synth --model " + m + " --regime signature_id --n 1500 --seed 1 --out-prefix " + dir.file("train"));
        rc |= run_cli("synth --model " + m + " --regime signature_id --n 300 --seed 2 --out-prefix " + dir.file("test"));
        rc |= run_cli("synth --model " + m + " --regime sparse_ood --n 300 --seed 3 --out-prefix " + dir.file("sparse"));
        rc |= run_cli("synth --model " + m + " --regime uniform_ood --n 300 --seed 4 --out-prefix " + dir.file("uniform"));
        rc |= run_cli("fit --train-logits " + dir.file("train_logits.npy") + " --train-labels " +
                      dir.file("train_labels.npy") + " --a 10 --b 2 --out " + dir.file("m.clm"));
        rc |= run_cli("score --logits " + dir.file("test_logits.npy") + " --clm " + dir.file("m.clm") +
                      " --method excel --out " + dir.file("s.npy"));
        rc |= run_cli("export-heatmap --clm " + dir.file("m.clm") + " --class 3 --ranks 5 --out " + dir.file("h.csv"));
        rc |= run_cli("eval --config " + dir.file("config.json"));
        if (rc != 0) o.fail("a CLI invocation failed");
        std::vector<std::string> snapshot;
        for (const auto& f : outputs) snapshot.push_back(slurp(dir.file(f)));
        if (pass == 0) {
            first = snapshot;
            for (const auto& f : outputs) std::filesystem::remove(dir.file(f));
        } else {
            for (std::size_t k = 0; k < outputs.size(); ++k)
                if (snapshot[k] != first[k] || snapshot[k].empty()) o.fail(outputs[k] + " differs between runs");
        }
    }

    // Library round trips over random bit patterns.
    std::mt19937_64 rng(909);
    std::uniform_int_distribution<std::uint64_t> bits;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> scores(37);
        for (auto& x : scores) {
            do {
                const auto b = bits(rng);
                std::memcpy(&x, &b, sizeof x);
            } while (!std::isfinite(x));
        }
        save_scores({"x", scores}, dir.file("rt.npy"));
        const auto back = load_scores(dir.file("rt.npy")).scores;
        if (std::memcmp(back.data(), scores.data(), scores.size() * sizeof(double)) != 0) o.fail("score round trip");

        const auto set = random_fitted_set(rng, 3 + static_cast<std::size_t>(trial % 6), {5, 2});
        for (auto enc : {ClmEncoding::f64, ClmEncoding::two_bit}) {
            save_clm_set(set, dir.file("rt.clm"), enc);
            if (!(load_clm_set(dir.file("rt.clm")) == set)) o.fail("CLM round trip");
        }
        const auto real = random_real_set(rng, 4);
        save_clm_set(real, dir.file("real.clm"));
        if (!(load_clm_set(dir.file("real.clm")) == real)) o.fail("real-valued CLM round trip");
    }
    if (o.pass) o.detail = std::to_string(outputs.size()) + " CLI outputs byte-identical across runs; 20 score and 60 CLM round trips bit-exact";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"trace equivalence", trace_equivalence},
        {"CLM oracle equivalence", clm_oracle},
        {"smoothing totality", smoothing_totality},
        {"uniform-CLM reduction to MaxLogit", uniform_reduction},
        {"metric oracles", metric_oracles},
        {"qualitative synthetic experiment", qualitative_experiment},
        {"tuner correctness", tuner_correctness},
        {"mean overall rank arithmetic", mean_rank_arithmetic},
        {"determinism and round trips", determinism_round_trips},
    };
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
