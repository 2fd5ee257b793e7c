#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "annbias/annmodel.hpp"
#include "annbias/dataset.hpp"
#include "annbias/errors.hpp"
#include "annbias/feedbacksim.hpp"
#include "annbias/metrics.hpp"

// Experiment orchestration: simulate -> train a lambda sweep x trials ->
// evaluate -> aggregate, with per-run records persisted so reports regenerate
// without retraining.

namespace annbias {

struct ExperimentSpec {
    FeedbackSimConfig sim;
    TrainConfig train;  // template; lambda/variant/seed filled per run
    std::vector<double> lambdas = {0.0, 0.9, 0.99, 0.999, 0.9999, 0.99999};
    int trials = 10;
    std::vector<Variant> variants = {Variant::WithBypass, Variant::NoBypass};
    std::uint64_t master_seed = 0;

    void validate() const {
        sim.validate();
        train.validate();
        if (lambdas.empty()) throw ConfigError("ExperimentSpec: lambda grid is empty");
        for (std::size_t i = 0; i < lambdas.size(); ++i) {
            if (!(lambdas[i] >= 0.0 && lambdas[i] <= 1.0))
                throw ConfigError("ExperimentSpec: lambdas must lie in [0, 1]");
            if (i > 0 && lambdas[i] <= lambdas[i - 1])
                throw ConfigError("ExperimentSpec: lambdas must be strictly increasing");
        }
        if (trials < 1) throw ConfigError("ExperimentSpec: trials must be >= 1");
        if (variants.empty()) throw ConfigError("ExperimentSpec: variants set is empty");
    }
};

// One (trial, lambda, variant) training run.
struct RunRecord {
    int trial = 0;
    double lambda = 0.0;
    Variant variant = Variant::WithBypass;
    bool ok = false;
    std::string error;

    double fl_auc = 0.0;
    double fl_log_loss = 0.0;
    double fl_probe_mse = 0.0;
    double rus_auc = 0.0;
    double rus_log_loss = 0.0;
    double rus_probe_mse = 0.0;
    double bypass_pred_diff = 0.0;
    std::uint64_t fl_checksum = 0;  // all lambda cells of a trial share the FL data
};

// Realized per-trial simulation summary (the run's own Tables 1-3 values).
struct TrialSummary {
    int trial = 0;
    BTable b_table;
    double all_days_pos1 = 0.0;
    double all_days_pos2 = 0.0;
    double naive_avg_ctr = 0.0;
    double naive_mse = 0.0;
    LogisticBound heldout_bound;
};

struct CellStats {
    double mean = 0.0;
    double stddev = 0.0;
    int n = 0;
};

struct SweepResult {
    ExperimentSpec spec;
    std::vector<RunRecord> runs;          // trial-major, then lambda, then variant
    std::vector<TrialSummary> trial_summaries;

    std::vector<const RunRecord*> cell(double lambda, Variant variant) const {
        std::vector<const RunRecord*> out;
        for (const RunRecord& r : runs)
            if (r.lambda == lambda && r.variant == variant && r.ok) out.push_back(&r);
        return out;
    }

    CellStats stats(double lambda, Variant variant, double RunRecord::*field)
        const {
        std::vector<double> vals;
        for (const RunRecord* r : cell(lambda, variant)) vals.push_back(r->*field);
        CellStats s;
        s.n = static_cast<int>(vals.size());
        s.mean = mean_of(vals);
        s.stddev = stddev_of(vals);
        return s;
    }

    bool all_ok() const {
        for (const RunRecord& r : runs)
            if (!r.ok) return false;
        return true;
    }
};

namespace detail {

inline std::uint64_t dataset_checksum(const Dataset& d) {
    // FNV-1a over the raw matrix/label/b bytes
    std::uint64_t h = 1469598103934665603ULL;
    auto eat = [&h](const void* ptr, std::size_t bytes) {
        const unsigned char* p = static_cast<const unsigned char*>(ptr);
        for (std::size_t i = 0; i < bytes; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    eat(d.X.data(), sizeof(double) * static_cast<std::size_t>(d.X.size()));
    eat(d.y.data(), sizeof(double) * static_cast<std::size_t>(d.y.size()));
    eat(d.b.data(), sizeof(double) * static_cast<std::size_t>(d.b.size()));
    return h;
}

}  // namespace detail

// Trains and evaluates one cell against a prepared simulation.
inline RunRecord run_cell(const ExperimentSpec& spec, const FeedbackLoopOutput& sim_out,
                          const Dataset& fl, int trial, double lambda, Variant variant) {
    RunRecord rec;
    rec.trial = trial;
    rec.lambda = lambda;
    rec.variant = variant;
    rec.fl_checksum = detail::dataset_checksum(fl);
    try {
        TrainConfig cfg = spec.train;
        cfg.lambda = lambda;
        cfg.variant = variant;
        cfg.rng_seed = derive_seed(spec.master_seed, static_cast<std::uint64_t>(trial), 0x0DE1);

        AnnParams params = make_ann(static_cast<int>(fl.n_features()), cfg);
        train(params, fl.X, fl.y, fl.b, cfg);
        rec.fl_probe_mse = probe_bias(params, fl.X, fl.b, cfg);

        Vector fl_scores = infer(params, fl.X, BPolicy{fl.b});
        rec.fl_auc = auc(fl.y, fl_scores);
        rec.fl_log_loss = log_loss(fl.y, fl_scores);

        const double pos1 = sim_out.b_table.last_pos1;
        const double pos2 = sim_out.b_table.last_pos2;
        Vector rus_scores = infer(params, sim_out.heldout.X, BPolicy{pos1});
        rec.rus_auc = auc(sim_out.heldout.y, rus_scores);
        rec.rus_log_loss = log_loss(sim_out.heldout.y, rus_scores);

        Matrix z_a = forward_value(params.base, sim_out.heldout.X);
        Vector b_hat = forward_value(params.bias, z_a).col(0);
        rec.rus_probe_mse =
            (b_hat.array() - pos1).square().sum() / static_cast<double>(b_hat.size());

        rec.bypass_pred_diff = bypass_prediction_diff(params, sim_out.heldout.X, pos1, pos2);
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

inline TrialSummary summarize_trial(const ExperimentSpec& spec, const FeedbackLoopOutput& sim_out,
                                    int trial, std::uint64_t sim_seed) {
    TrialSummary ts;
    ts.trial = trial;
    ts.b_table = sim_out.b_table;
    std::vector<double> p1, p2;
    for (const DayCtr& d : sim_out.ctr_history) {
        p1.push_back(d.position1);
        p2.push_back(d.position2);
    }
    ts.all_days_pos1 = mean_of(p1);
    ts.all_days_pos2 = mean_of(p2);
    auto [avg, mse] = naive_ctr_baseline(sim_out);
    ts.naive_avg_ctr = avg;
    ts.naive_mse = mse;
    ts.heldout_bound = heldout_logistic_bound(spec.sim, derive_seed(sim_seed, 0xB0DD));
    return ts;
}

// Full protocol: one simulation per trial seed; every (lambda, variant) cell of
// a trial trains on that trial's FL data (last two days) with identical weight
// initialization, so lambda comparisons are paired. Failed cells are recorded
// and the sweep continues.
inline SweepResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    SweepResult result;
    result.spec = spec;
    for (int trial = 0; trial < spec.trials; ++trial) {
        FeedbackSimConfig sim_cfg = spec.sim;
        const std::uint64_t sim_seed = derive_seed(spec.master_seed,
                                                   static_cast<std::uint64_t>(trial));
        sim_cfg.rng_seed = sim_seed;
        FeedbackLoopOutput sim_out = run_feedback_loop(sim_cfg);
        Dataset fl = feedback_training_set(sim_out);
        result.trial_summaries.push_back(summarize_trial(spec, sim_out, trial, sim_seed));
        for (double lambda : spec.lambdas)
            for (Variant variant : spec.variants)
                result.runs.push_back(run_cell(spec, sim_out, fl, trial, lambda, variant));
    }
    return result;
}

// Section-6 protocol: identical pipeline with position-2 click corruption.
inline SweepResult run_user_bias_experiment(ExperimentSpec spec, double r = 0.25) {
    spec.sim.r = r;
    return run_experiment(spec);
}

// ---------------------------------------------------------------------------
// JSON (config and records) and report emission

inline void to_json(nlohmann::ordered_json& j, const FeedbackSimConfig& c) {
    j = {{"K", c.K},
         {"T", c.T},
         {"r", c.r},
         {"sigma", c.sigma},
         {"p_click", c.p_click},
         {"reservoir_size", c.reservoir_size},
         {"heldout_size", c.heldout_size},
         {"candidate_set_size", c.candidate_set_size},
         {"top_per_set", c.top_per_set},
         {"n_features", c.n_features},
         {"ranker_l2", c.ranker_l2},
         {"rng_seed", c.rng_seed}};
}

inline void from_json(const nlohmann::json& j, FeedbackSimConfig& c) {
    c.K = j.value("K", c.K);
    c.T = j.value("T", c.T);
    c.r = j.value("r", c.r);
    c.sigma = j.value("sigma", c.sigma);
    c.p_click = j.value("p_click", c.p_click);
    c.reservoir_size = j.value("reservoir_size", c.reservoir_size);
    c.heldout_size = j.value("heldout_size", c.heldout_size);
    c.candidate_set_size = j.value("candidate_set_size", c.candidate_set_size);
    c.top_per_set = j.value("top_per_set", c.top_per_set);
    c.n_features = j.value("n_features", c.n_features);
    c.ranker_l2 = j.value("ranker_l2", c.ranker_l2);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
}

inline void to_json(nlohmann::ordered_json& j, const TrainConfig& c) {
    j = {{"lambda", c.lambda},
         {"learning_rate", c.learning_rate},
         {"minibatch_size", c.minibatch_size},
         {"epochs", c.epochs},
         {"probe_epochs", c.probe_epochs},
         {"base_widths", c.base_widths},
         {"prediction_widths", c.prediction_widths},
         {"bias_widths", c.bias_widths},
         {"bypass_widths", c.bypass_widths},
         {"variant", variant_name(c.variant)},
         {"rng_seed", c.rng_seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.lambda = j.value("lambda", c.lambda);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.probe_epochs = j.value("probe_epochs", c.probe_epochs);
    c.base_widths = j.value("base_widths", c.base_widths);
    c.prediction_widths = j.value("prediction_widths", c.prediction_widths);
    c.bias_widths = j.value("bias_widths", c.bias_widths);
    c.bypass_widths = j.value("bypass_widths", c.bypass_widths);
    if (j.contains("variant")) c.variant = variant_from_name(j.at("variant").get<std::string>());
    c.rng_seed = j.value("rng_seed", c.rng_seed);
}

inline void to_json(nlohmann::ordered_json& j, const ExperimentSpec& s) {
    nlohmann::ordered_json sim, train;
    to_json(sim, s.sim);
    to_json(train, s.train);
    std::vector<std::string> variant_names;
    for (Variant v : s.variants) variant_names.emplace_back(variant_name(v));
    j = {{"sim", sim},
         {"train", train},
         {"lambdas", s.lambdas},
         {"trials", s.trials},
         {"variants", variant_names},
         {"master_seed", s.master_seed}};
}

inline void from_json(const nlohmann::json& j, ExperimentSpec& s) {
    if (j.contains("sim")) from_json(j.at("sim"), s.sim);
    if (j.contains("train")) from_json(j.at("train"), s.train);
    s.lambdas = j.value("lambdas", s.lambdas);
    s.trials = j.value("trials", s.trials);
    if (j.contains("variants")) {
        s.variants.clear();
        for (const auto& name : j.at("variants"))
            s.variants.push_back(variant_from_name(name.get<std::string>()));
    }
    s.master_seed = j.value("master_seed", s.master_seed);
}

inline nlohmann::ordered_json run_record_to_json(const RunRecord& r) {
    return {{"trial", r.trial},
            {"lambda", r.lambda},
            {"variant", variant_name(r.variant)},
            {"ok", r.ok},
            {"error", r.error},
            {"fl_auc", r.fl_auc},
            {"fl_log_loss", r.fl_log_loss},
            {"fl_probe_mse", r.fl_probe_mse},
            {"rus_auc", r.rus_auc},
            {"rus_log_loss", r.rus_log_loss},
            {"rus_probe_mse", r.rus_probe_mse},
            {"bypass_pred_diff", r.bypass_pred_diff},
            {"fl_checksum", r.fl_checksum}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.trial = j.at("trial").get<int>();
    r.lambda = j.at("lambda").get<double>();
    r.variant = variant_from_name(j.at("variant").get<std::string>());
    r.ok = j.at("ok").get<bool>();
    r.error = j.value("error", "");
    r.fl_auc = j.at("fl_auc").get<double>();
    r.fl_log_loss = j.at("fl_log_loss").get<double>();
    r.fl_probe_mse = j.at("fl_probe_mse").get<double>();
    r.rus_auc = j.at("rus_auc").get<double>();
    r.rus_log_loss = j.at("rus_log_loss").get<double>();
    r.rus_probe_mse = j.at("rus_probe_mse").get<double>();
    r.bypass_pred_diff = j.at("bypass_pred_diff").get<double>();
    r.fl_checksum = j.at("fl_checksum").get<std::uint64_t>();
    return r;
}

inline nlohmann::ordered_json trial_summary_to_json(const TrialSummary& t) {
    return {{"trial", t.trial},
            {"position_ctrs",
             {{"day_prev", t.b_table.day_prev},
              {"day_last", t.b_table.day_last},
              {"prev_pos1", t.b_table.prev_pos1},
              {"prev_pos2", t.b_table.prev_pos2},
              {"last_pos1", t.b_table.last_pos1},
              {"last_pos2", t.b_table.last_pos2},
              {"all_days_pos1", t.all_days_pos1},
              {"all_days_pos2", t.all_days_pos2}}},
            {"naive_baseline", {{"avg_ctr", t.naive_avg_ctr}, {"mse", t.naive_mse}}},
            {"heldout_logistic_bound",
             {{"auc", t.heldout_bound.auc}, {"log_loss", t.heldout_bound.log_loss}}}};
}

inline TrialSummary trial_summary_from_json(const nlohmann::json& j) {
    TrialSummary t;
    t.trial = j.at("trial").get<int>();
    const auto& p = j.at("position_ctrs");
    t.b_table.day_prev = p.at("day_prev").get<int>();
    t.b_table.day_last = p.at("day_last").get<int>();
    t.b_table.prev_pos1 = p.at("prev_pos1").get<double>();
    t.b_table.prev_pos2 = p.at("prev_pos2").get<double>();
    t.b_table.last_pos1 = p.at("last_pos1").get<double>();
    t.b_table.last_pos2 = p.at("last_pos2").get<double>();
    t.all_days_pos1 = p.at("all_days_pos1").get<double>();
    t.all_days_pos2 = p.at("all_days_pos2").get<double>();
    t.naive_avg_ctr = j.at("naive_baseline").at("avg_ctr").get<double>();
    t.naive_mse = j.at("naive_baseline").at("mse").get<double>();
    t.heldout_bound.auc = j.at("heldout_logistic_bound").at("auc").get<double>();
    t.heldout_bound.log_loss = j.at("heldout_logistic_bound").at("log_loss").get<double>();
    return t;
}

enum class ReportFormat { Csv, Json, Both };

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

// One Fig.-5-style panel: lambda rows (strictly increasing), mean/std columns
// per variant present in the sweep.
inline std::string panel_csv(const SweepResult& result, double RunRecord::*field) {
    std::ostringstream os;
    os << "lambda";
    for (Variant v : result.spec.variants)
        os << "," << variant_name(v) << "_mean," << variant_name(v) << "_std";
    os << "\n";
    for (double lambda : result.spec.lambdas) {
        os << format_g17(lambda);
        for (Variant v : result.spec.variants) {
            CellStats s = result.stats(lambda, v, field);
            os << "," << format_g17(s.mean) << "," << format_g17(s.stddev);
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace detail

inline const std::vector<std::pair<std::string, double RunRecord::*>>& panel_fields() {
    static const std::vector<std::pair<std::string, double RunRecord::*>> fields = {
        {"fl_auc", &RunRecord::fl_auc},
        {"fl_probe_mse", &RunRecord::fl_probe_mse},
        {"rus_auc", &RunRecord::rus_auc},
        {"rus_probe_mse", &RunRecord::rus_probe_mse},
        {"bypass_pred_diff", &RunRecord::bypass_pred_diff},
    };
    return fields;
}

inline nlohmann::ordered_json sweep_summary_json(const SweepResult& result) {
    nlohmann::ordered_json j;
    j["format"] = "annbias-sweep-summary";
    j["version"] = 1;
    {
        nlohmann::ordered_json spec_json;
        to_json(spec_json, result.spec);
        j["spec"] = spec_json;
    }

    nlohmann::ordered_json trials = nlohmann::ordered_json::array();
    for (const TrialSummary& t : result.trial_summaries)
        trials.push_back(trial_summary_to_json(t));
    j["trial_summaries"] = trials;

    std::vector<double> naive_mses, bound_aucs, bound_lls;
    for (const TrialSummary& t : result.trial_summaries) {
        naive_mses.push_back(t.naive_mse);
        bound_aucs.push_back(t.heldout_bound.auc);
        bound_lls.push_back(t.heldout_bound.log_loss);
    }
    j["means"] = {{"naive_mse", mean_of(naive_mses)},
                  {"heldout_bound_auc", mean_of(bound_aucs)},
                  {"heldout_bound_log_loss", mean_of(bound_lls)}};

    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (double lambda : result.spec.lambdas) {
        for (Variant v : result.spec.variants) {
            nlohmann::ordered_json cell;
            cell["lambda"] = lambda;
            cell["variant"] = variant_name(v);
            for (const auto& [name, field] : panel_fields()) {
                CellStats s = result.stats(lambda, v, field);
                cell[name] = {{"mean", s.mean}, {"std", s.stddev}, {"trials", s.n}};
            }
            // RUS AUC vs the lambda=0 cell: relative percent and absolute
            // percentage points, both reported
            CellStats ref = result.stats(result.spec.lambdas.front(), v, &RunRecord::rus_auc);
            CellStats cur = result.stats(lambda, v, &RunRecord::rus_auc);
            if (ref.n > 0 && ref.mean > 0.0) {
                cell["rus_auc_gain_vs_lambda0_relative_pct"] =
                    relative_auc_gain(cur.mean, ref.mean);
                cell["rus_auc_diff_vs_lambda0_absolute_pp"] = absolute_pp_diff(cur.mean, ref.mean);
            }
            cells.push_back(std::move(cell));
        }
    }
    j["cells"] = std::move(cells);

    nlohmann::ordered_json failures = nlohmann::ordered_json::array();
    for (const RunRecord& r : result.runs)
        if (!r.ok)
            failures.push_back({{"trial", r.trial},
                                {"lambda", r.lambda},
                                {"variant", variant_name(r.variant)},
                                {"error", r.error}});
    j["failed_cells"] = std::move(failures);
    return j;
}

// Writes panel CSVs and/or the JSON summary plus runs.jsonl, the resolved
// config, and a plain-text run log. Returns the list of files written.
inline std::vector<std::filesystem::path> emit_report(const SweepResult& result,
                                                      const std::filesystem::path& out_dir,
                                                      ReportFormat format = ReportFormat::Both) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("emit_report: cannot create " + out_dir.string());

    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const std::string& content) {
        detail::write_text_file(out_dir / name, content);
        written.push_back(out_dir / name);
    };

    if (format != ReportFormat::Json)
        for (const auto& [name, field] : panel_fields())
            emit(name + ".csv", detail::panel_csv(result, field));

    if (format != ReportFormat::Csv)
        emit("sweep_summary.json", sweep_summary_json(result).dump(2) + "\n");

    {
        std::ostringstream os;
        for (const RunRecord& r : result.runs) os << run_record_to_json(r).dump() << "\n";
        for (const TrialSummary& t : result.trial_summaries) {
            nlohmann::ordered_json line = trial_summary_to_json(t);
            line["record"] = "trial_summary";
            os << line.dump() << "\n";
        }
        emit("runs.jsonl", os.str());
    }
    {
        nlohmann::ordered_json spec_json;
        to_json(spec_json, result.spec);
        emit("resolved_config.json", spec_json.dump(2) + "\n");
    }
    {
        std::ostringstream os;
        for (const RunRecord& r : result.runs) {
            os << "trial=" << r.trial << " lambda=" << detail::format_g17(r.lambda)
               << " variant=" << variant_name(r.variant);
            if (r.ok)
                os << " fl_auc=" << detail::format_g17(r.fl_auc)
                   << " fl_probe_mse=" << detail::format_g17(r.fl_probe_mse)
                   << " rus_auc=" << detail::format_g17(r.rus_auc) << "\n";
            else
                os << " FAILED: " << r.error << "\n";
        }
        emit("run.log", os.str());
    }
    return written;
}

// Rebuilds a SweepResult from persisted per-run records (the `report` verb).
inline SweepResult load_sweep(const std::filesystem::path& run_dir) {
    std::ifstream cfg_in(run_dir / "resolved_config.json");
    if (!cfg_in) throw IoError("load_sweep: missing " + (run_dir / "resolved_config.json").string());
    nlohmann::json cfg_json;
    try {
        cfg_in >> cfg_json;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_sweep: resolved_config.json: " + std::string(e.what()));
    }
    SweepResult result;
    from_json(cfg_json, result.spec);

    std::ifstream runs_in(run_dir / "runs.jsonl");
    if (!runs_in) throw IoError("load_sweep: missing " + (run_dir / "runs.jsonl").string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(runs_in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("runs.jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
        if (j.value("record", "") == "trial_summary")
            result.trial_summaries.push_back(trial_summary_from_json(j));
        else
            result.runs.push_back(run_record_from_json(j));
    }
    return result;
}

}  // namespace annbias
