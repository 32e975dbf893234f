#include "unicp/cli.hpp"

#include "unicp/container.hpp"
#include "unicp/error.hpp"
#include "unicp/harness.hpp"
#include "unicp/quality.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace unicp::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::vector<std::string> preamble(const RunSpec& spec) {
    return {"unicp " + std::string(run_mode_name(spec.mode)), "spec " + spec_echo(spec)};
}

std::string with_comment_header(const RunSpec& spec, const std::string& body) {
    std::string out;
    for (const auto& line : preamble(spec)) out += "# " + line + "\n";
    return out + body;
}

std::string percent(double ratio) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << ratio;
    return os.str();
}

void print_tallies(std::ostream& out, const TraceTotals& totals) {
    out << "attention cells: F=" << totals.attention_decisions[0] << " O=" << totals.attention_decisions[1]
        << " M=" << totals.attention_decisions[2] << " P=" << totals.attention_decisions[3] << '\n';
}

void require_model_match(const ModelConfig& expected, const ModelConfig& found, const std::string& what) {
    if (!(expected == found)) throw invalid_argument(what + " was produced for a different model configuration");
}

UnitSlices load_sliced(const RunSpec& spec) {
    ModelConfig cfg;
    UnitSlices sliced = decode_sliced(read_file(spec.calibration_dir() / kSlicedWeights), &cfg);
    require_model_match(spec.model, cfg, std::string(kSlicedWeights));
    return sliced;
}

CacheMap load_cache_map(const RunSpec& spec) {
    CacheMap map = cache_map_import(read_file(spec.calibration_dir() / kCacheMap));
    require_model_match(spec.model, map.model, std::string(kCacheMap));
    return map;
}

CalibrationOptions calibration_options(const RunSpec& spec) {
    CalibrationOptions opt;
    opt.ratio       = spec.ratio;
    opt.aggregation = spec.aggregation;
    return opt;
}

}  // namespace

int cmd_baseline(const RunSpec& spec, std::ostream& out) {
    spec.validate();
    const Model model = init_model(spec.model);
    FullDispatch dispatch;
    const RunResult run = denoise_run(model, dispatch);

    write_file(spec.out / kBaselineState, encode_state(spec.model, run.final_state));
    write_file(spec.out / kBaselineTrace, trace_export(run.trace, preamble(spec)));

    const TraceTotals totals = run.trace.totals();
    out << "baseline: " << run.trace.rows.size() << " rows, total MACs " << totals.macs_total << " (closed form "
        << baseline_macs_per_step(spec.model) * spec.model.steps << ")\n";
    out << "wrote " << (spec.out / kBaselineState).string() << ", " << (spec.out / kBaselineTrace).string() << '\n';
    return 0;
}

int cmd_calibrate(const RunSpec& spec, std::ostream& out) {
    spec.validate();
    const Model model             = init_model(spec.model);
    const CalibrationResult calib = dws_calibrate(model, spec.scheduler, calibration_options(spec));

    write_file(spec.out / kCacheMap, with_comment_header(spec, cache_map_export(calib.map)));
    write_file(spec.out / kSlicedWeights, encode_sliced(spec.model, calib.sliced));

    std::string records = "block,kind,step,n,rel_l2,accepted\n";
    for (const CalibrationRecord& r : calib.records) {
        records += std::to_string(r.block) + "," + std::string(attn_kind_name(r.kind)) + "," + std::to_string(r.step) +
                   "," + std::to_string(r.candidate_n) + "," + format_real(r.measured_error) + "," +
                   (r.accepted ? "1" : "0") + "\n";
    }
    write_file(spec.out / kCalibRecords, with_comment_header(spec, records));

    out << "calibration delta " << format_real(spec.scheduler.delta) << ", window " << spec.scheduler.window
        << ", aggregation " << aggregation_name(spec.aggregation) << '\n';
    out << "block kind      final_n pruned\n";
    for (std::size_t b = 0; b < spec.model.num_blocks; ++b) {
        for (AttnKind kind : {AttnKind::spatial, AttnKind::temporal}) {
            const std::size_t n = calib.map.final_n[unit_index(b, kind)].value_or(spec.model.dim);
            char line[96];
            std::snprintf(line, sizeof(line), "%5zu %-9s %7zu %.4f\n", b, std::string(attn_kind_name(kind)).c_str(), n,
                          1.0 - static_cast<double>(n) / static_cast<double>(spec.model.dim));
            out << line;
        }
    }
    const auto t = calib.map.tallies();
    out << "planned cells: F=" << t[0] << " O=" << t[1] << " M=" << t[2] << " P=" << t[3] << '\n';
    out << "wrote " << (spec.out / kCacheMap).string() << ", " << (spec.out / kSlicedWeights).string() << '\n';
    return 0;
}

int cmd_run_unicp(const RunSpec& spec, std::ostream& out) {
    spec.validate();
    const Model model = init_model(spec.model);
    RunResult run;
    CacheMap executed;

    if (spec.mode == RunMode::unicp_replay) {
        CacheMap plan     = load_cache_map(spec);
        UnitSlices sliced = load_sliced(spec);
        if (!spec.prune) {
            for (auto& row : plan.grid) std::replace(row.begin(), row.end(), 'P', 'F');
        }
        ReplayDispatch dispatch(model, std::move(plan), std::move(sliced));
        run      = denoise_run(model, dispatch);
        executed = dispatch.executed();
    } else {
        UnitSlices sliced;
        if (spec.prune) {
            if (fs::exists(spec.calibration_dir() / kSlicedWeights)) {
                sliced = load_sliced(spec);
            } else {
                out << "no " << kSlicedWeights << " in " << spec.calibration_dir().string()
                    << ", calibrating in process\n";
                sliced = dws_calibrate(model, spec.scheduler, calibration_options(spec)).sliced;
            }
        }
        OnlineDispatch dispatch(model, spec.scheduler, std::move(sliced));
        run      = denoise_run(model, dispatch);
        executed = dispatch.executed();
        executed.ratio       = spec.ratio;
        executed.aggregation = spec.aggregation;
    }

    write_file(spec.out / kRunState, encode_state(spec.model, run.final_state));
    write_file(spec.out / kRunTrace, trace_export(run.trace, preamble(spec)));
    write_file(spec.out / kRunMap, with_comment_header(spec, cache_map_export(executed)));

    const TraceTotals totals = run.trace.totals();
    out << "unicp " << dispatch_mode_name(spec.mode == RunMode::unicp_replay ? DispatchMode::replay : DispatchMode::online)
        << ": total MACs " << totals.macs_total << '\n';
    print_tallies(out, totals);
    if (spec.baseline_trace) {
        const TraceTotals base = trace_parse(read_file(*spec.baseline_trace)).totals();
        if (base.macs_total == 0) throw invalid_argument("baseline trace has zero MACs");
        out << "MAC ratio vs " << spec.baseline_trace->string() << ": "
            << percent(static_cast<double>(totals.macs_total) / static_cast<double>(base.macs_total)) << '\n';
    } else {
        const MacCount base = baseline_macs_per_step(spec.model) * spec.model.steps;
        out << "MAC ratio vs closed-form baseline: "
            << percent(static_cast<double>(totals.macs_total) / static_cast<double>(base)) << '\n';
    }
    out << "wrote " << (spec.out / kRunState).string() << ", " << (spec.out / kRunTrace).string() << ", "
        << (spec.out / kRunMap).string() << '\n';
    return 0;
}

namespace {

DriftProfile default_profile() {
    DriftProfile p = u_profile(30, 0.2, 0.01);
    p.spikes.push_back(Spike{15, 0.3});
    return p;
}

std::string harness_row(const std::string& policy, std::size_t step, char executed, std::size_t k, double drift_output,
                        double drift_map, double reuse_error) {
    return policy + "," + std::to_string(step) + "," + executed + "," + (k > 0 ? std::to_string(k) : "") + "," +
           format_real(drift_output) + "," + format_real(drift_map) + "," + format_real(reuse_error) + "\n";
}

}  // namespace

int cmd_harness(const RunSpec& spec, std::ostream& out) {
    const DriftProfile profile = spec.profile ? parse_profile(read_file(*spec.profile)).profile : default_profile();
    spec.scheduler.validate(profile.steps());
    for (std::size_t w : spec.fixed_windows)
        if (w < 1) throw invalid_argument("fixed windows must be >= 1");

    const HarnessSequence seq = synthesize_sequence(profile, 16, 8, spec.model.seed);
    const HarnessResult r     = run_scheduler_on_sequence(seq, spec.scheduler, spec.fixed_windows);

    std::string rows = "policy,step,executed,k,drift_output,drift_map,reuse_error\n";
    for (const HarnessStep& s : r.steps) {
        rows += harness_row("edcw", s.step, decision_letter(s.executed), s.decision.window, s.decision.drift_output,
                            s.decision.drift_map, s.reuse_error);
    }
    for (const FixedWindowResult& f : r.fixed) {
        const Mat* cached = nullptr;
        for (std::size_t i = 0; i < seq.steps.size(); ++i) {
            double err = 0.0;
            if (f.reused[i]) {
                err = rel_l2(*cached, seq.results[i].output);
            } else {
                cached = &seq.results[i].output;
            }
            rows += harness_row("fixed-" + std::to_string(f.window), seq.steps[i], f.reused[i] ? 'O' : 'F',
                                f.reused[i] ? f.window : 0, kNotMeasured, kNotMeasured, err);
        }
    }
    write_file(spec.out / kHarnessSteps, with_comment_header(spec, rows));

    ordered_json report;
    report["spec"]    = ordered_json::parse(spec_echo(spec));
    report["profile"] = {{"steps", profile.steps()}, {"drifts", profile.drifts}};
    report["profile"]["spikes"] = ordered_json::array();
    for (const Spike& s : profile.spikes)
        report["profile"]["spikes"].push_back({{"step", s.step}, {"magnitude", s.magnitude}});
    report["accumulated_error_definition"] = "sum over reuse steps of rel_l2(served, true)";
    report["edcw"]["accumulated_error"]    = r.accumulated_error;
    report["edcw"]["armed"]                = ordered_json::array();
    for (const ArmedWindow& a : r.armed) {
        report["edcw"]["armed"].push_back(
            {{"step", a.step}, {"k", a.window}, {"kind", a.kind == CacheKind::output ? "output" : "map"}});
    }
    bool spans = false;
    for (const Spike& s : profile.spikes)
        for (const ArmedWindow& a : r.armed) spans = spans || window_spans(a.step, a.window, s.step);
    report["edcw"]["armed_across_spike"] = spans;
    report["fixed"]                      = ordered_json::array();
    for (const FixedWindowResult& f : r.fixed)
        report["fixed"].push_back({{"window", f.window}, {"accumulated_error", f.accumulated_error}});
    write_file(spec.out / kHarnessReport, report.dump(2) + "\n");

    out << "edcw accumulated reuse error " << format_real(r.accumulated_error) << ", " << r.armed.size()
        << " windows armed" << (spans ? ", one spans a spike" : "") << '\n';
    for (const FixedWindowResult& f : r.fixed)
        out << "fixed window " << f.window << " accumulated reuse error " << format_real(f.accumulated_error) << '\n';
    out << "wrote " << (spec.out / kHarnessSteps).string() << ", " << (spec.out / kHarnessReport).string() << '\n';
    return 0;
}

int cmd_compare(const RunSpec& spec, std::ostream& out) {
    if (spec.inputs.size() != 2) throw invalid_argument("compare takes exactly two state files (reference, candidate)");
    const LatentState reference = decode_state(read_file(spec.inputs[0]));
    const LatentState candidate = decode_state(read_file(spec.inputs[1]));
    const QualityReport q       = compare_states(candidate, reference);

    ordered_json report;
    report["reference"] = spec.inputs[0].string();
    report["candidate"] = spec.inputs[1].string();
    report["psnr_db"]   = q.psnr_db;
    report["ssim"]      = q.ssim;
    report["rel_l2"]    = q.rel_l2;
    report["mse"]       = q.mse;
    report["constants"] = {
        {"peak", q.peak},
        {"peak_source", "reference max - min"},
        {"dynamic_range", q.dynamic_range},
        {"ssim_window", q.window},
        {"ssim_weighting", "uniform"},
        {"ssim_c1", (0.01 * q.dynamic_range) * (0.01 * q.dynamic_range)},
        {"ssim_c2", (0.03 * q.dynamic_range) * (0.03 * q.dynamic_range)},
        {"psnr_cap_db", kPsnrCapDb},
    };
    const std::string text = report.dump(2) + "\n";
    write_file(spec.out / kQualityReport, text);
    out << text;
    return 0;
}

namespace {

struct Flags {
    std::optional<std::string> config, preset, mode, aggregation, calib, baseline_trace, profile, out;
    std::optional<double> delta, ratio_lo, ratio_hi, eta_min, eta_max;
    std::optional<std::size_t> window, blocks, dim, tokens, frames, steps;
    std::optional<std::uint64_t> seed;
    std::optional<std::vector<std::size_t>> fixed_windows;
    bool no_prune = false;
    std::vector<std::string> inputs;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON config file; flags override it");
    sub->add_option("--preset", f.preset, "threshold preset E1..E5");
    sub->add_option("--delta", f.delta, "cache error threshold");
    sub->add_option("--window", f.window, "search window K");
    sub->add_option("--ratio-lo", f.ratio_lo, "lowest pruned fraction");
    sub->add_option("--ratio-hi", f.ratio_hi, "highest pruned fraction");
    sub->add_option("--seed", f.seed, "model and noise seed");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--mode", f.mode, "online or replay");
    sub->add_option("--aggregation", f.aggregation, "conservative or smallest");
    sub->add_flag("--no-prune", f.no_prune, "disable sliced attention");
    sub->add_option("--calib", f.calib, "directory holding calibration artifacts");
    sub->add_option("--baseline-trace", f.baseline_trace, "baseline trace for the MAC ratio");
    sub->add_option("--blocks", f.blocks, "number of blocks");
    sub->add_option("--dim", f.dim, "model width m");
    sub->add_option("--tokens", f.tokens, "tokens per frame s");
    sub->add_option("--frames", f.frames, "frames f");
    sub->add_option("--steps", f.steps, "denoising steps T");
    sub->add_option("--eta-min", f.eta_min, "smallest step size");
    sub->add_option("--eta-max", f.eta_max, "largest step size");
}

RunSpec build_spec(RunMode mode, const Flags& f) {
    RunSpec spec;
    spec.mode = mode;
    if (f.config) {
        std::string text;
        try {
            text = read_file(*f.config);
        } catch (const Error& e) {
            throw invalid_argument(std::string("config: ") + e.what());
        }
        apply_config(spec, text);
    }
    if (mode == RunMode::harness && (f.profile || spec.profile)) {
        if (f.profile) spec.profile = *f.profile;
        spec.scheduler = parse_profile(read_file(*spec.profile)).sched;
    }
    if (f.preset && f.delta) throw invalid_argument("--preset and --delta are mutually exclusive");
    if (f.preset) {
        spec.preset          = *f.preset;
        spec.scheduler.delta = preset_delta(*f.preset);
    }
    if (f.delta) {
        spec.preset.reset();
        spec.scheduler.delta = *f.delta;
    }
    if (f.window) spec.scheduler.window = *f.window;
    if (f.ratio_lo) spec.ratio.lo = *f.ratio_lo;
    if (f.ratio_hi) spec.ratio.hi = *f.ratio_hi;
    if (f.seed) spec.model.seed = *f.seed;
    if (f.blocks) spec.model.num_blocks = *f.blocks;
    if (f.dim) spec.model.dim = *f.dim;
    if (f.tokens) spec.model.tokens = *f.tokens;
    if (f.frames) spec.model.frames = *f.frames;
    if (f.steps) spec.model.steps = *f.steps;
    if (f.eta_min) spec.model.eta_min = *f.eta_min;
    if (f.eta_max) spec.model.eta_max = *f.eta_max;
    if (f.out) spec.out = *f.out;
    if (f.calib) spec.calib_dir = *f.calib;
    if (f.baseline_trace) spec.baseline_trace = *f.baseline_trace;
    if (f.aggregation) spec.aggregation = aggregation_from_name(*f.aggregation);
    if (f.fixed_windows) spec.fixed_windows = *f.fixed_windows;
    if (f.no_prune) spec.prune = false;
    if (f.mode) {
        const DispatchMode m = dispatch_mode_from_name(*f.mode);
        if (mode == RunMode::unicp_online || mode == RunMode::unicp_replay) {
            spec.mode = m == DispatchMode::online ? RunMode::unicp_online : RunMode::unicp_replay;
        }
    }
    for (const auto& p : f.inputs) spec.inputs.emplace_back(p);
    return spec;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cached and sliced attention scheduling on a toy video diffusion transformer", "unicp"};
    app.require_subcommand(1);
    Flags f;
    auto* baseline  = app.add_subcommand("baseline", "full-compute run");
    auto* calibrate = app.add_subcommand("calibrate", "fit sliced projections and plan the cache map");
    auto* run       = app.add_subcommand("run", "accelerated run (online or replay)");
    auto* harness   = app.add_subcommand("harness", "scheduler on a scripted drift profile");
    auto* compare   = app.add_subcommand("compare", "quality report between two state files");
    for (auto* sub : {baseline, calibrate, run, harness, compare}) add_common(sub, f);
    harness->add_option("--profile", f.profile, "drift profile file");
    harness->add_option("--fixed-windows", f.fixed_windows, "fixed-window comparators");
    compare->add_option("files", f.inputs, "reference and candidate state files")->expected(2);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorCode::invalid_argument);
    }

    try {
        if (baseline->parsed()) return cmd_baseline(build_spec(RunMode::baseline, f), out);
        if (calibrate->parsed()) return cmd_calibrate(build_spec(RunMode::calibrate, f), out);
        if (run->parsed()) return cmd_run_unicp(build_spec(RunMode::unicp_online, f), out);
        if (harness->parsed()) return cmd_harness(build_spec(RunMode::harness, f), out);
        if (compare->parsed()) return cmd_compare(build_spec(RunMode::compare, f), out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return 1;
    }
    return static_cast<int>(ErrorCode::invalid_argument);
}

}  // namespace unicp::cli
