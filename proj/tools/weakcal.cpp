// weakcal: weak-supervision calibration toolbox.
//
// Subcommands:
//   toy-convergence  synthetic estimator-error sweep (CSV + slopes JSON)
//   weakview         build weak-supervision views from a labeled records CSV
//   estimate         decontaminated residual table + metric report
//   calibrate        fit a correction map (wlmc/temp/platt) and re-score a test view
//
// File formats:
//   records CSV   columns: id,score,label,conf,source,g0..g{m-1}
//   table CSV     columns: group,bin,bin_lo,bin_hi,moment,active_mass
//   trace CSV     columns: round,group,bin_lo,bin_hi,signed_violation,step_applied
//   reports       JSON with stable key order
//
// Exit codes: 0 success, 2 usage, 3 data, 4 numeric.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "weakcal/decon.hpp"
#include "weakcal/io.hpp"
#include "weakcal/metrics.hpp"
#include "weakcal/postproc.hpp"
#include "weakcal/rng.hpp"
#include "weakcal/toylab.hpp"
#include "weakcal/weakview.hpp"

namespace fs = std::filesystem;
using namespace weakcal;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct ViewData {
    WeakBags bags;
    int m = 0;
    ordered_json manifest;  // empty object when loaded from a flat CSV
};

// A view is either a bundle directory (manifest.json + one CSV per source)
// or a flat records CSV whose source column partitions the bags.
ViewData load_view(const fs::path& path) {
    ViewData view;
    if (fs::is_directory(path)) {
        std::ifstream in(path / "manifest.json");
        if (!in) throw DataError("missing manifest.json in " + path.string());
        view.manifest = ordered_json::parse(in, nullptr, true);
        for (const auto& [name, count] : view.manifest.at("counts").items()) {
            RecordsFile file = read_records_csv(path / (name + ".csv"));
            if (file.records.size() != count.get<std::size_t>())
                throw DataError("manifest count mismatch for source " + name);
            view.m = file.m;
            view.bags[source_from_string(name)] = std::move(file.records);
        }
        if (view.bags.bags.empty())
            throw DataError("empty view bundle: " + path.string());
        return view;
    }
    RecordsFile file = read_records_csv(path);
    view.m = file.m;
    view.manifest = ordered_json::object();
    for (ScoredRecord& rec : file.records)
        view.bags[rec.source].push_back(std::move(rec));
    return view;
}

std::vector<ScoredRecord> pooled_records(const WeakBags& bags) {
    std::vector<ScoredRecord> all;
    for (const auto& [tag, records] : bags.bags)
        all.insert(all.end(), records.begin(), records.end());
    return all;
}

DecontaminationSpec build_spec(const std::string& regime, double pi_plus,
                               double gamma1, double gamma2,
                               std::optional<double> tau) {
    if (regime == "pn") return spec_pn();
    if (regime == "pu") return spec_pu(pi_plus);
    if (regime == "uu") return spec_uu(pi_plus, gamma1, gamma2);
    if (regime == "pconf") return spec_pconf(pi_plus, tau);
    if (regime == "su") return spec_su(pi_plus);
    if (regime == "du") return spec_du(pi_plus);
    if (regime == "sd") return spec_sd(pi_plus);
    if (regime == "pcomp") return spec_pcomp(pi_plus);
    if (regime == "posterior-conf") return spec_posterior_conf();
    if (regime == "sconf") return spec_sconf(pi_plus);
    throw CLI::ValidationError("--regime", "unknown regime: " + regime);
}

// Group masses for metric normalization.  An eval pool wins when given;
// otherwise the regime's own denominator estimator is used, falling back
// to the pooled empirical fraction.
struct MassChoice {
    std::vector<double> mu;
    std::string source;
};

MassChoice choose_masses(const std::string& regime, const ViewData& view,
                         const std::vector<ScoredRecord>& eval_pool,
                         double pi_plus, double gamma1, double gamma2,
                         std::optional<double> tau) {
    if (!eval_pool.empty())
        return {group_mass_eval(eval_pool, view.m), "eval-pool"};
    if (regime == "pu") return {group_mass_pu(view.bags, view.m), "pu-unl"};
    if (regime == "pconf")
        return {group_mass_pconf(view.bags, pi_plus, view.m, tau), "pconf"};
    if (regime == "uu")
        return {group_mass_uu(view.bags, pi_plus, gamma1, gamma2, view.m), "uu"};
    return {group_mass_eval(pooled_records(view.bags), view.m), "pooled"};
}

double resolve_pi(const std::optional<double>& flag, const ViewData& view,
                  const std::string& regime) {
    if (flag) return *flag;
    if (view.manifest.contains("pi_hat"))
        return view.manifest["pi_hat"].get<double>();
    if (regime == "pn" || regime == "posterior-conf") return 0.5;  // unused
    throw CLI::ValidationError("--pi-plus",
                               "required for regime " + regime +
                                   " when the view manifest has no pi_hat");
}

ordered_json effective_config(
    const std::vector<std::pair<std::string, ordered_json>>& entries) {
    ordered_json j;
    for (const auto& [key, value] : entries) j[key] = value;
    return j;
}

void write_json(const fs::path& path, const ordered_json& j) {
    write_atomic(path, j.dump(2) + "\n");
}

// --- toy-convergence --------------------------------------------------------

int cmd_toy_convergence(const ConvergenceRun& run, std::uint64_t seed,
                        const fs::path& out_dir) {
    fs::create_directories(out_dir);
    ToyWorld world;
    Rng rng(seed);
    const ConvergenceResult result = convergence_experiment(world, run, rng);

    std::ostringstream csv;
    csv.precision(17);
    csv << "regime,n,mean_abs_err,std_abs_err\n";
    for (const ConvergencePoint& p : result.points)
        csv << p.regime << "," << p.n << "," << p.mean_abs_err << ","
            << p.std_abs_err << "\n";
    write_atomic(out_dir / "convergence.csv", csv.str());

    std::ostringstream sizes;
    for (std::size_t i = 0; i < run.sizes.size(); ++i)
        sizes << (i ? "," : "") << run.sizes[i];
    ordered_json slopes;
    slopes["slopes"] = result.slopes;
    slopes["population_mc"] = world.population_mc();
    slopes["effective_config"] = effective_config({{"seed", seed},
                                                   {"reps", run.reps},
                                                   {"sizes", sizes.str()},
                                                   {"rho1", run.rho1},
                                                   {"rho2", run.rho2}});
    write_json(out_dir / "slopes.json", slopes);
    return 0;
}

// --- weakview ---------------------------------------------------------------

int cmd_weakview(const fs::path& records_path, const std::string& regime,
                 const WeakViewParams& params, std::uint64_t seed,
                 const fs::path& out_dir) {
    const RecordsFile file = read_records_csv(records_path);
    for (const ScoredRecord& rec : file.records)
        if (!rec.label)
            throw DataError("weakview requires a fully labeled records file");

    Rng rng(seed);
    WeakView view;
    if (regime == "pu") {
        view = make_pu(file.records, params, rng);
    } else if (regime == "uu") {
        view = make_uu(file.records, params, rng);
    } else if (regime == "pconf") {
        // Teacher confidences come from the records' conf column.
        view = make_pconf(file.records, [](const ScoredRecord& rec) {
            if (!rec.confidence)
                throw DataError("pconf view needs a conf column value per row");
            return *rec.confidence;
        });
    } else {
        throw CLI::ValidationError("--regime",
                                   "weakview supports pu, uu, pconf");
    }

    fs::create_directories(out_dir);
    ordered_json counts;
    for (const auto& [tag, records] : view.bags.bags) {
        const std::string name = to_string(tag);
        write_atomic(out_dir / (name + ".csv"),
                     format_records_csv(records, file.m));
        counts[name] = records.size();
    }
    ordered_json manifest;
    manifest["regime"] = regime;
    manifest["pi_hat"] = view.pi_hat;
    manifest["gamma1"] = params.gamma1;
    manifest["gamma2"] = params.gamma2;
    manifest["seed"] = seed;
    manifest["m"] = file.m;
    manifest["counts"] = counts;
    manifest["effective_config"] =
        effective_config({{"regime", regime},
                          {"seed", seed},
                          {"lambda_p", params.lambda_p},
                          {"lambda_u", params.lambda_u},
                          {"gamma1", params.gamma1},
                          {"gamma2", params.gamma2},
                          {"lambda_1", params.lambda_1},
                          {"lambda_2", params.lambda_2}});
    write_json(out_dir / "manifest.json", manifest);
    return 0;
}

// --- estimate ---------------------------------------------------------------

struct EstimateOutput {
    ResidualTable table{0, 0, ""};
    MetricReport report;
    std::string mass_source;
};

EstimateOutput run_estimate(const std::string& regime, const ViewData& view,
                            const std::vector<ScoredRecord>& eval_pool,
                            double pi_plus, double gamma1, double gamma2,
                            std::optional<double> tau, int bins,
                            double mu_min) {
    const WitnessFamily family(view.m, bins);
    const DecontaminationSpec spec =
        build_spec(regime, pi_plus, gamma1, gamma2, tau);
    EstimateOutput out;
    out.table = corrected_residual(spec, view.bags, family);
    const MassChoice masses = choose_masses(regime, view, eval_pool, pi_plus,
                                            gamma1, gamma2, tau);
    out.report = metric_report(out.table, masses.mu, mu_min);
    out.mass_source = masses.source;
    return out;
}

int cmd_estimate(const fs::path& view_path, const fs::path& eval_path,
                 const std::string& regime, std::optional<double> pi_flag,
                 double gamma1, double gamma2, std::optional<double> tau,
                 int bins, double mu_min, const fs::path& out_dir) {
    const ViewData view = load_view(view_path);
    std::vector<ScoredRecord> eval_pool;
    if (!eval_path.empty()) eval_pool = read_records_csv(eval_path).records;
    const double pi_plus = resolve_pi(pi_flag, view, regime);
    const EstimateOutput out = run_estimate(regime, view, eval_pool, pi_plus,
                                            gamma1, gamma2, tau, bins, mu_min);

    fs::create_directories(out_dir);
    write_atomic(out_dir / "table.csv", format_table_csv(out.table));
    ordered_json report = report_json(out.report, out.mass_source);
    report["effective_config"] = effective_config(
        {{"regime", regime},
         {"pi_plus", pi_plus},
         {"gamma1", gamma1},
         {"gamma2", gamma2},
         {"rmin", tau ? ordered_json(*tau) : ordered_json(nullptr)},
         {"bins", bins},
         {"mu_min", mu_min}});
    write_json(out_dir / "report.json", report);
    return 0;
}

// --- calibrate --------------------------------------------------------------

WeakBags apply_to_bags(const CalibrationMap& map, const WeakBags& bags) {
    WeakBags out = bags;
    for (auto& [tag, records] : out.bags)
        for (ScoredRecord& rec : records) rec.score = map.apply(rec);
    return out;
}

struct FitOutcome {
    CalibrationMap map;
    std::vector<WlmcRound> trace;
    bool converged = true;
    ordered_json detail;
};

FitOutcome fit_method(const std::string& method, const std::string& regime,
                      const ViewData& correction, double pi_plus,
                      double gamma1, double gamma2, std::optional<double> tau,
                      int bins, const WlmcConfig& wlmc_cfg,
                      std::uint64_t seed) {
    FitOutcome out;
    out.detail = ordered_json::object();
    if (method == "wlmc") {
        const DecontaminationSpec spec =
            build_spec(regime, pi_plus, gamma1, gamma2, tau);
        std::function<WeakBags()> sampler;
        if (wlmc_cfg.fresh_batch) {
            // Fresh batches are bootstrap redraws of the correction view.
            auto rng = std::make_shared<Rng>(seed);
            const WeakBags* base = &correction.bags;
            sampler = [rng, base]() {
                WeakBags fresh;
                for (const auto& [tag, records] : base->bags) {
                    auto& bag = fresh.bags[tag];
                    bag.reserve(records.size());
                    for (std::size_t i = 0; i < records.size(); ++i)
                        bag.push_back(records[rng->index(records.size())]);
                }
                return fresh;
            };
        }
        const WitnessFamily family(correction.m, bins);
        WlmcResult fit =
            wlmc_fit(spec, correction.bags, family, wlmc_cfg, sampler);
        out.map = std::move(fit.map);
        out.trace = std::move(fit.trace);
        out.converged = fit.final_max_violation <= wlmc_cfg.alpha;
        out.detail["rounds"] = fit.rounds;
        out.detail["final_max_violation"] = fit.final_max_violation;
        return out;
    }

    WeakNllObjective obj;
    obj.regime = regime;
    obj.pi_plus = pi_plus;
    obj.gamma1 = gamma1;
    obj.gamma2 = gamma2;
    obj.tau = tau;
    if (method == "temp") {
        const TemperatureFit fit = fit_temperature(obj, correction.bags);
        out.map.steps.push_back(Temperature{fit.beta});
        out.converged = fit.converged;
        out.detail["beta"] = fit.beta;
        out.detail["objective"] = fit.objective;
        return out;
    }
    if (method == "platt") {
        const PlattFit fit = fit_platt(obj, correction.bags);
        out.map.steps.push_back(AffineLogit{fit.a, fit.b});
        out.converged = fit.converged;
        out.detail["a"] = fit.a;
        out.detail["b"] = fit.b;
        out.detail["objective"] = fit.objective;
        return out;
    }
    throw CLI::ValidationError("--method", "unknown method: " + method);
}

int cmd_calibrate(const fs::path& correction_path, const fs::path& test_path,
                  const fs::path& validation_path, const fs::path& eval_path,
                  std::string method, bool select_best,
                  const std::string& regime, std::optional<double> pi_flag,
                  double gamma1, double gamma2, std::optional<double> tau,
                  int bins, double mu_min, const WlmcConfig& wlmc_cfg,
                  std::uint64_t seed, const fs::path& out_dir) {
    const ViewData correction = load_view(correction_path);
    const ViewData test = load_view(test_path);
    const std::string test_regime = test.manifest.contains("regime")
                                        ? test.manifest["regime"].get<std::string>()
                                        : regime;
    std::vector<ScoredRecord> eval_pool;
    if (!eval_path.empty()) eval_pool = read_records_csv(eval_path).records;
    const double pi_plus = resolve_pi(pi_flag, correction, regime);

    FitOutcome chosen;
    ordered_json selection = ordered_json::object();
    if (select_best) {
        // Selection criterion: post-correction MC on the validation view
        // (the correction view when no validation view is given), audited
        // with the weak regime's own decontamination.
        const ViewData validation = validation_path.empty()
                                        ? correction
                                        : load_view(validation_path);
        const double val_pi = resolve_pi(pi_flag, validation, regime);
        bool have_best = false;
        double best = 0.0;
        for (const std::string& candidate : {"wlmc", "temp", "platt"}) {
            FitOutcome fit =
                fit_method(candidate, regime, correction, pi_plus, gamma1,
                           gamma2, tau, bins, wlmc_cfg, seed);
            ViewData scored = validation;
            scored.bags = apply_to_bags(fit.map, validation.bags);
            const EstimateOutput est =
                run_estimate(regime, scored, {}, val_pi, gamma1, gamma2, tau,
                             bins, mu_min);
            selection[candidate] = est.report.mc.value;
            if (!have_best || est.report.mc.value < best) {
                have_best = true;
                best = est.report.mc.value;
                method = candidate;
                chosen = std::move(fit);
            }
        }
    } else {
        chosen = fit_method(method, regime, correction, pi_plus, gamma1,
                            gamma2, tau, bins, wlmc_cfg, seed);
    }

    const double test_pi =
        pi_flag ? *pi_flag
                : (test.manifest.contains("pi_hat")
                       ? test.manifest["pi_hat"].get<double>()
                       : pi_plus);
    const EstimateOutput before =
        run_estimate(test_regime, test, eval_pool, test_pi, gamma1, gamma2,
                     tau, bins, mu_min);
    ViewData corrected_test = test;
    corrected_test.bags = apply_to_bags(chosen.map, test.bags);
    const EstimateOutput after =
        run_estimate(test_regime, corrected_test, eval_pool, test_pi, gamma1,
                     gamma2, tau, bins, mu_min);

    fs::create_directories(out_dir);
    write_json(out_dir / "map.json", map_json(chosen.map));
    write_atomic(out_dir / "trace.csv", format_trace_csv(chosen.trace));
    write_json(out_dir / "report_before.json",
               report_json(before.report, before.mass_source));
    write_json(out_dir / "report_after.json",
               report_json(after.report, after.mass_source));

    ordered_json manifest;
    manifest["method"] = method;
    manifest["regime"] = regime;
    manifest["test_regime"] = test_regime;
    manifest["converged"] = chosen.converged;
    manifest["fit"] = chosen.detail;
    if (select_best) manifest["selection_mc"] = selection;
    manifest["mc_before"] = before.report.mc.value;
    manifest["mc_after"] = after.report.mc.value;
    manifest["effective_config"] = effective_config(
        {{"method", method},
         {"regime", regime},
         {"pi_plus", pi_plus},
         {"gamma1", gamma1},
         {"gamma2", gamma2},
         {"bins", bins},
         {"eta", wlmc_cfg.eta},
         {"rounds", wlmc_cfg.T},
         {"threshold", wlmc_cfg.alpha},
         {"min_mass", wlmc_cfg.min_active_mass},
         {"rmin", wlmc_cfg.r_min},
         {"fresh_batches", wlmc_cfg.fresh_batch},
         {"mu_min", mu_min},
         {"seed", seed}});
    write_json(out_dir / "calibrate.json", manifest);
    if (!chosen.converged)
        std::cerr << "warning: " << method << " did not converge\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakcal: multicalibration from weak supervision"};
    app.require_subcommand(1);
    app.set_config("--config")->configurable(false);
    app.config_formatter(std::make_shared<CLI::ConfigINI>());

    // Shared option storage.
    std::uint64_t seed = 0;
    std::optional<double> pi_plus;
    double gamma1 = 0.2, gamma2 = 0.2;
    std::optional<double> rmin_flag;
    int bins = 10;
    double mu_min = 0.0;
    std::string regime = "pn";
    std::string out_dir = "out";

    auto add_common = [&](CLI::App* cmd, bool with_regime) {
        cmd->add_option("--seed", seed, "master seed")
            ->envname("WEAKCAL_SEED")
            ->capture_default_str();
        cmd->add_option("--out", out_dir, "output directory")
            ->capture_default_str();
        if (with_regime)
            cmd->add_option("--regime", regime, "supervision regime")
                ->capture_default_str();
    };

    // toy-convergence
    ConvergenceRun run;
    std::vector<int> sizes_flag;
    auto* conv = app.add_subcommand(
        "toy-convergence", "estimator error sweep on the synthetic world");
    add_common(conv, false);
    conv->add_option("--reps", run.reps, "repetitions per size")
        ->capture_default_str();
    conv->add_option("--sizes", sizes_flag, "sample sizes (comma separated)")
        ->delimiter(',');

    // weakview
    WeakViewParams params;
    std::string records_path;
    auto* wv = app.add_subcommand("weakview",
                                  "build a weak view from labeled records");
    add_common(wv, true);
    wv->add_option("records", records_path, "labeled records CSV")->required();
    wv->add_option("--gamma1", params.gamma1, "UU contamination 1")
        ->capture_default_str();
    wv->add_option("--gamma2", params.gamma2, "UU contamination 2")
        ->capture_default_str();
    wv->add_option("--lambda-p", params.lambda_p, "PU positive rate")
        ->capture_default_str();
    wv->add_option("--lambda-u", params.lambda_u, "PU unlabeled rate")
        ->capture_default_str();

    // estimate
    std::string view_path, eval_path;
    auto* est = app.add_subcommand(
        "estimate", "decontaminated residual table + metric report");
    add_common(est, true);
    est->add_option("view", view_path, "view bundle dir or records CSV")
        ->required();
    est->add_option("--eval-pool", eval_path,
                    "labeled pool for group-mass denominators");
    est->add_option("--pi-plus", pi_plus, "class prior");
    est->add_option("--gamma1", gamma1, "UU contamination 1")
        ->capture_default_str();
    est->add_option("--gamma2", gamma2, "UU contamination 2")
        ->capture_default_str();
    est->add_option("--rmin", rmin_flag, "confidence clip floor");
    est->add_option("--bins", bins, "score bins")->capture_default_str();
    est->add_option("--mu-min", mu_min, "mass floor for max-ECE groups")
        ->capture_default_str();

    // calibrate
    WlmcConfig wlmc_cfg;
    std::string correction_path, test_path, validation_path, cal_eval_path;
    std::string method = "wlmc";
    bool select_best = false;
    auto* cal = app.add_subcommand(
        "calibrate", "fit a correction map and score a test view");
    add_common(cal, true);
    cal->add_option("correction", correction_path, "correction view")
        ->required();
    cal->add_option("test", test_path, "test view")->required();
    cal->add_option("--validation", validation_path,
                    "validation view for --select-best");
    cal->add_option("--eval-pool", cal_eval_path,
                    "labeled pool for group-mass denominators");
    cal->add_option("--method", method, "wlmc | temp | platt")
        ->capture_default_str();
    cal->add_flag("--select-best", select_best,
                  "try all methods, pick by weak validation MC");
    cal->add_option("--pi-plus", pi_plus, "class prior");
    cal->add_option("--gamma1", gamma1, "UU contamination 1")
        ->capture_default_str();
    cal->add_option("--gamma2", gamma2, "UU contamination 2")
        ->capture_default_str();
    cal->add_option("--bins", bins, "score bins")->capture_default_str();
    cal->add_option("--eta", wlmc_cfg.eta, "boosting step size")
        ->capture_default_str();
    cal->add_option("--rounds", wlmc_cfg.T, "max boosting rounds")
        ->capture_default_str();
    cal->add_option("--threshold", wlmc_cfg.alpha, "stop threshold")
        ->capture_default_str();
    cal->add_option("--min-mass", wlmc_cfg.min_active_mass,
                    "active-mass gate")
        ->capture_default_str();
    cal->add_option("--rmin", wlmc_cfg.r_min, "audit confidence floor")
        ->capture_default_str();
    cal->add_flag("--fresh-batches", wlmc_cfg.fresh_batch,
                  "bootstrap a fresh batch per boosting round");
    cal->add_option("--mu-min", mu_min, "mass floor for max-ECE groups")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*conv) {
            if (!sizes_flag.empty()) run.sizes = sizes_flag;
            return cmd_toy_convergence(run, seed, out_dir);
        }
        if (*wv) return cmd_weakview(records_path, regime, params, seed, out_dir);
        if (*est) {
            std::optional<double> tau = rmin_flag;
            return cmd_estimate(view_path, eval_path, regime, pi_plus, gamma1,
                                gamma2, tau, bins, mu_min, out_dir);
        }
        if (*cal) {
            std::optional<double> tau;
            if (regime == "pconf" && cal->count("--rmin"))
                tau = wlmc_cfg.r_min;
            return cmd_calibrate(correction_path, test_path, validation_path,
                                 cal_eval_path, method, select_best, regime,
                                 pi_plus, gamma1, gamma2, tau, bins, mu_min,
                                 wlmc_cfg, seed, out_dir);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
