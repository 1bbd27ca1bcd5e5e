// excel: fit class likelihood matrices, score logits, evaluate and tune OOD
// detectors, generate synthetic logits, and export CLM slices.
//
// Exit codes: 0 success, 1 internal error, 2 usage or input error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "excel/excel.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_internal = 1;
constexpr int exit_input = 2;

void log(const std::string& msg) { std::cerr << "[excel] " << msg << '\n'; }
void warn(const std::string& msg) { std::cerr << "[excel] warning: " << msg << '\n'; }

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw excel::IoError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw excel::MalformedFile(path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw excel::IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw excel::IoError("write failed for '" + path + "'");
}

excel::LabelVector load_labels_for(const std::string& path, const excel::LogitMatrix& logits) {
    return excel::load_labels(path, logits.num_samples(), logits.num_classes());
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
    std::string train_logits, train_labels, out;
    double a = 10.0, b = 5.0;
    std::string encoding = "f64";
    bool no_raw = false;
};

int cmd_fit(const FitArgs& args) {
    const auto logits = excel::load_logits(args.train_logits);
    const auto labels = load_labels_for(args.train_labels, logits);
    const excel::SmoothingParams params{args.a, args.b};
    const auto set = excel::fit(logits, labels, params);
    for (const auto& w : set.warnings()) warn(w);
    for (auto c : set.fallback_classes()) warn("class " + std::to_string(c) + " uses the uniform fallback CLM");
    const auto enc = args.encoding == "2bit" ? excel::ClmEncoding::two_bit : excel::ClmEncoding::f64;
    excel::save_clm_set(set, args.out, enc, !args.no_raw);
    log("wrote " + std::to_string(set.num_classes()) + "-class CLM set to " + args.out);
    return exit_ok;
}

// ---------------------------------------------------------------------------
// score

struct ScoreArgs {
    std::string logits, clm, method = "excel", out;
    double alpha = 0.8;
    std::optional<double> temperature;
    std::string fit_logits, fit_labels;
};

int cmd_score(const ScoreArgs& args) {
    const auto method = excel::parse_method(args.method);
    const auto logits = excel::load_logits(args.logits);

    excel::ScoringContext ctx;
    ctx.excel.alpha = args.alpha;
    std::optional<excel::SmoothedClmSet> clms;
    if (!args.clm.empty()) {
        clms = excel::load_clm_set(args.clm);
        ctx.clms = &*clms;
    }
    if (method == excel::Method::energy && args.temperature) ctx.energy_temperature = *args.temperature;
    if (method == excel::Method::tempscale) {
        if (args.temperature) {
            ctx.temperature = args.temperature;
        } else if (!args.fit_logits.empty() && !args.fit_labels.empty()) {
            const auto val = excel::load_logits(args.fit_logits);
            ctx.temperature = excel::fit_temperature(val, load_labels_for(args.fit_labels, val));
            log("fitted temperature " + std::to_string(*ctx.temperature));
        }
    }
    const auto scores = excel::score_matrix(logits, method, ctx);
    excel::save_scores(scores, args.out);
    log("wrote " + std::to_string(scores.size()) + " " + scores.method + " scores to " + args.out);
    return exit_ok;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string config;
    std::string manifest, output_dir;
    std::vector<std::string> methods;
    std::optional<double> a, b, alpha, temperature;
};

struct RunConfig {
    std::string manifest;
    std::vector<excel::Method> methods;
    excel::SmoothingParams smoothing;
    excel::ExcelParams excel;
    std::optional<double> temperature;
    std::string output_dir;
    std::uint64_t seed = 0;
};

RunConfig resolve_config(const EvalArgs& args) {
    RunConfig cfg;
    std::vector<std::string> method_names;
    fs::path base;
    if (!args.config.empty()) {
        const auto j = read_json_file(args.config);
        base = fs::path(args.config).parent_path();
        try {
            if (j.contains("manifest")) cfg.manifest = (base / j.at("manifest").get<std::string>()).string();
            if (j.contains("methods")) method_names = j.at("methods").get<std::vector<std::string>>();
            // Nested {"smoothing": {a, b}, "excel": {alpha}} or flat a/b/alpha keys.
            const auto& sm = j.contains("smoothing") ? j.at("smoothing") : j;
            const auto& ex = j.contains("excel") ? j.at("excel") : j;
            cfg.smoothing.a = sm.value("a", cfg.smoothing.a);
            cfg.smoothing.b = sm.value("b", cfg.smoothing.b);
            cfg.excel.alpha = ex.value("alpha", cfg.excel.alpha);
            if (j.contains("temperature")) cfg.temperature = j.at("temperature").get<double>();
            if (j.contains("output_dir")) cfg.output_dir = (base / j.at("output_dir").get<std::string>()).string();
            cfg.seed = j.value("seed", cfg.seed);
        } catch (const nlohmann::json::exception& e) {
            throw excel::MalformedFile(args.config + ": " + e.what());
        }
    }
    if (!args.manifest.empty()) cfg.manifest = args.manifest;
    if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
    if (!args.methods.empty()) method_names = args.methods;
    if (args.a) cfg.smoothing.a = *args.a;
    if (args.b) cfg.smoothing.b = *args.b;
    if (args.alpha) cfg.excel.alpha = *args.alpha;
    if (args.temperature) cfg.temperature = args.temperature;

    if (cfg.manifest.empty()) throw excel::InvalidArgument("no manifest given (config 'manifest' or --manifest)");
    if (cfg.output_dir.empty()) throw excel::InvalidArgument("no output directory given");
    if (method_names.empty()) throw excel::InvalidArgument("no methods given");
    for (const auto& name : method_names) cfg.methods.push_back(excel::parse_method(name));
    cfg.smoothing.validate();
    cfg.excel.validate();
    return cfg;
}

int cmd_eval(const EvalArgs& args) {
    const auto cfg = resolve_config(args);
    const auto manifest = excel::load_manifest(cfg.manifest);

    const auto id_test = excel::load_logits(manifest.id_test.logits);
    std::vector<std::pair<excel::OodSet, excel::LogitMatrix>> ood;
    for (const auto& set : manifest.ood) {
        ood.emplace_back(set, excel::load_logits(set.path));
        if (ood.back().second.num_classes() != id_test.num_classes())
            throw excel::DimensionMismatch("OOD set '" + set.name + "' disagrees with id_test on the class count");
    }

    excel::ScoringContext ctx;
    ctx.excel = cfg.excel;
    std::optional<excel::SmoothedClmSet> clms;
    bool need_clm = false, need_temp = false;
    for (auto m : cfg.methods) {
        need_clm = need_clm || excel::needs_clm(m);
        need_temp = need_temp || m == excel::Method::tempscale;
    }
    if (need_clm) {
        if (!manifest.id_train.labels) throw excel::MissingContext("id_train needs labels to fit the CLM set");
        const auto train = excel::load_logits(manifest.id_train.logits);
        clms = excel::fit(train, load_labels_for(*manifest.id_train.labels, train), cfg.smoothing);
        for (const auto& w : clms->warnings()) warn(w);
        ctx.clms = &*clms;
    }
    if (need_temp) {
        if (cfg.temperature) {
            ctx.temperature = cfg.temperature;
        } else {
            if (!manifest.id_val || !manifest.id_val->labels)
                throw excel::MissingContext("tempscale needs a temperature or labelled id_val to fit one");
            const auto val = excel::load_logits(manifest.id_val->logits);
            ctx.temperature = excel::fit_temperature(val, load_labels_for(*manifest.id_val->labels, val));
            log("fitted temperature " + std::to_string(*ctx.temperature));
        }
    }

    fs::create_directories(cfg.output_dir);
    std::vector<excel::DetectionReport> reports;
    for (auto m : cfg.methods) {
        const auto id_scores = excel::score_matrix(id_test, m, ctx);
        std::vector<excel::OodScores> ood_scores;
        for (const auto& [set, logits] : ood)
            ood_scores.push_back({set.name, set.group, excel::score_matrix(logits, m, ctx).scores});
        auto report = excel::evaluate(id_scores.method, id_scores.scores, ood_scores);
        for (const auto& w : report.warnings) warn(id_scores.method + ": " + w);
        write_text((fs::path(cfg.output_dir) / ("report_" + id_scores.method + ".json")).string(),
                   excel::to_json(report).dump(2) + "\n");
        reports.push_back(std::move(report));
    }
    const auto table = excel::rank_methods(reports);
    const auto text = excel::render_table(reports, table);
    write_text((fs::path(cfg.output_dir) / "rank_table.json").string(), excel::to_json(table).dump(2) + "\n");
    write_text((fs::path(cfg.output_dir) / "rank_table.txt").string(), text);
    std::cout << text;
    return exit_ok;
}

// ---------------------------------------------------------------------------
// tune

struct TuneArgs {
    std::string train_logits, train_labels, val_id, grid, out;
    std::vector<std::string> val_ood_near, val_ood_far;
};

int cmd_tune(const TuneArgs& args) {
    excel::GridSpec grid;
    if (!args.grid.empty()) {
        nlohmann::json j;
        if (args.grid.front() == '{') {
            try {
                j = nlohmann::json::parse(args.grid);
            } catch (const nlohmann::json::exception& e) {
                throw excel::MalformedFile(std::string("--grid: ") + e.what());
            }
        } else {
            j = read_json_file(args.grid);
        }
        grid = excel::grid_from_json(j);
    }
    const auto train = excel::load_logits(args.train_logits);
    const auto labels = load_labels_for(args.train_labels, train);
    const auto val_id = excel::load_logits(args.val_id);
    std::vector<excel::ValidationOod> val_ood;
    for (const auto& p : args.val_ood_near)
        val_ood.push_back({fs::path(p).stem().string(), excel::OodGroup::near, excel::load_logits(p)});
    for (const auto& p : args.val_ood_far)
        val_ood.push_back({fs::path(p).stem().string(), excel::OodGroup::far, excel::load_logits(p)});
    if (val_ood.empty()) throw excel::InvalidArgument("give at least one --val-ood or --val-ood-far");

    const auto result = excel::tune(train, labels, val_id, val_ood, grid);
    if (!args.out.empty()) write_text(args.out, excel::to_json(result, grid.objective).dump(2) + "\n");
    std::cout << "best a=" << result.best.a << " b=" << result.best.b << " alpha=" << result.best.alpha << " "
              << excel::objective_name(grid.objective) << "=" << result.best.objective << '\n';
    return exit_ok;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    std::string model, regime, out_prefix;
    std::size_t n = 0;
    std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& args) {
    const auto model = excel::synth::model_from_json(read_json_file(args.model));
    const auto regime = excel::synth::parse_regime(args.regime);
    const auto batch = excel::synth::generate(model, args.n, regime, args.seed);
    const auto logits_path = args.out_prefix + "_logits.npy";
    excel::save_logits(logits_path, batch.logits, excel::FileFormat::npy);
    log("wrote " + logits_path);
    if (batch.labels) {
        const auto labels_path = args.out_prefix + "_labels.npy";
        excel::save_labels(labels_path, *batch.labels);
        log("wrote " + labels_path);
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------
// export-heatmap

struct HeatmapArgs {
    std::string clm, out;
    long long cls = 0;
    std::size_t ranks = 10;
    bool smoothed = false;
};

int cmd_export_heatmap(const HeatmapArgs& args) {
    const auto set = excel::load_clm_set(args.clm);
    const std::size_t C = set.num_classes();
    if (args.cls < 0 || static_cast<std::size_t>(args.cls) >= C)
        throw excel::InvalidArgument("class " + std::to_string(args.cls) + " out of range [0, " + std::to_string(C) +
                                     ")");
    std::size_t k = args.ranks;
    if (k == 0) throw excel::InvalidArgument("--ranks must be at least 1");
    if (k > C) {
        warn("--ranks " + std::to_string(k) + " exceeds the class count; clamped to " + std::to_string(C));
        k = C;
    }
    const bool use_raw = !args.smoothed && set.has_raw();
    if (!args.smoothed && !use_raw) warn("CLM file has no raw likelihoods; exporting the smoothed matrix");
    const auto view = use_raw ? set.raw(static_cast<std::size_t>(args.cls)) : set.smoothed(static_cast<std::size_t>(args.cls));

    std::string text;
    for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            if (j) text += ',';
            text += excel::detail::format_double(view(i, j));
        }
        text += '\n';
    }
    write_text(args.out, text);
    log("wrote " + std::to_string(C) + "x" + std::to_string(k) + (use_raw ? " raw" : " smoothed") + " slice to " +
        args.out);
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ExCeL out-of-distribution scoring engine"};
    app.require_subcommand(1);

    FitArgs fit_args;
    auto* fit = app.add_subcommand("fit", "Fit smoothed class likelihood matrices from training logits");
    fit->add_option("--train-logits", fit_args.train_logits, "Training logits (.npy or .csv)")->required();
    fit->add_option("--train-labels", fit_args.train_labels, "Training labels (.npy or .csv)")->required();
    fit->add_option("--a", fit_args.a, "Reward magnitude")->capture_default_str();
    fit->add_option("--b", fit_args.b, "High-likelihood threshold multiplier")->capture_default_str();
    fit->add_option("--out", fit_args.out, "Output CLM container")->required();
    fit->add_option("--encoding", fit_args.encoding, "Smoothed entry encoding")
        ->check(CLI::IsMember({"f64", "2bit"}))
        ->capture_default_str();
    fit->add_flag("--no-raw", fit_args.no_raw, "Do not store raw likelihoods");

    ScoreArgs score_args;
    auto* score = app.add_subcommand("score", "Score a logit matrix");
    score->add_option("--logits", score_args.logits, "Logits to score")->required();
    score->add_option("--clm", score_args.clm, "CLM container (excel, rankscore)");
    score->add_option("--method", score_args.method, "excel | rankscore | maxlogit | msp | energy | tempscale")
        ->capture_default_str();
    score->add_option("--alpha", score_args.alpha, "Rank-score weight")->capture_default_str();
    score->add_option("--temperature", score_args.temperature, "Temperature (tempscale, energy)");
    score->add_option("--fit-logits", score_args.fit_logits, "Validation logits for fitting the tempscale temperature");
    score->add_option("--fit-labels", score_args.fit_labels, "Validation labels for fitting the tempscale temperature");
    score->add_option("--out", score_args.out, "Output score .npy")->required();

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Evaluate methods over a split manifest");
    eval->add_option("--config", eval_args.config, "Run configuration JSON");
    eval->add_option("--manifest", eval_args.manifest, "Split manifest JSON (overrides config)");
    eval->add_option("--methods", eval_args.methods, "Methods (overrides config)");
    eval->add_option("--a", eval_args.a, "Reward magnitude (overrides config)");
    eval->add_option("--b", eval_args.b, "Threshold multiplier (overrides config)");
    eval->add_option("--alpha", eval_args.alpha, "Rank-score weight (overrides config)");
    eval->add_option("--temperature", eval_args.temperature, "Tempscale temperature (overrides config)");
    eval->add_option("--output-dir", eval_args.output_dir, "Output directory (overrides config)");

    TuneArgs tune_args;
    auto* tune = app.add_subcommand("tune", "Grid-search a, b and alpha on validation data");
    tune->add_option("--train-logits", tune_args.train_logits)->required();
    tune->add_option("--train-labels", tune_args.train_labels)->required();
    tune->add_option("--val-id", tune_args.val_id, "Validation ID logits")->required();
    tune->add_option("--val-ood", tune_args.val_ood_near, "Validation OOD logits, near group (repeatable)");
    tune->add_option("--val-ood-far", tune_args.val_ood_far, "Validation OOD logits, far group (repeatable)");
    tune->add_option("--grid", tune_args.grid, "Grid as inline JSON or a JSON file");
    tune->add_option("--out", tune_args.out, "TuneResult JSON");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate synthetic logits");
    synth->add_option("--model", synth_args.model, "Signature model JSON")->required();
    synth->add_option("--regime", synth_args.regime, "signature_id | sparse_ood | uniform_ood | flat_ood")->required();
    synth->add_option("--n", synth_args.n, "Number of samples")->required();
    synth->add_option("--seed", synth_args.seed, "Seed (overrides the model's)");
    synth->add_option("--out-prefix", synth_args.out_prefix, "Output prefix")->required();

    HeatmapArgs heat_args;
    auto* heat = app.add_subcommand("export-heatmap", "Export a C x k likelihood slice as CSV");
    heat->add_option("--clm", heat_args.clm, "CLM container")->required();
    heat->add_option("--class", heat_args.cls, "Base class")->required();
    heat->add_option("--ranks", heat_args.ranks, "Number of leading ranks")->capture_default_str();
    heat->add_option("--out", heat_args.out, "Output CSV")->required();
    heat->add_flag("--smoothed", heat_args.smoothed, "Export smoothed instead of raw likelihoods");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_input;
    }

    try {
        if (*fit) return cmd_fit(fit_args);
        if (*score) return cmd_score(score_args);
        if (*eval) return cmd_eval(eval_args);
        if (*tune) return cmd_tune(tune_args);
        if (*synth) return cmd_synth(synth_args);
        if (*heat) return cmd_export_heatmap(heat_args);
    } catch (const excel::Error& e) {
        std::cerr << "[excel] error: " << e.what() << '\n';
        return exit_input;
    } catch (const std::exception& e) {
        std::cerr << "[excel] internal error: " << e.what() << '\n';
        return exit_internal;
    }
    return exit_internal;
}
