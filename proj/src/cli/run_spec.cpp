#include "unicp/cli.hpp"

#include "unicp/error.hpp"

#include <json.hpp>

#include <set>

namespace unicp::cli {

using nlohmann::ordered_json;

std::string_view run_mode_name(RunMode m) {
    switch (m) {
        case RunMode::baseline: return "baseline";
        case RunMode::calibrate: return "calibrate";
        case RunMode::unicp_online: return "unicp-online";
        case RunMode::unicp_replay: return "unicp-replay";
        case RunMode::harness: return "harness";
        case RunMode::compare: return "compare";
    }
    return "?";
}

double preset_delta(std::string_view name) {
    for (const Preset& p : kPresets)
        if (p.name == name) return p.delta;
    throw invalid_argument("unknown preset '" + std::string(name) + "' (expected E1..E5)");
}

void RunSpec::validate() const {
    model.validate();
    scheduler.validate(model.steps);
    ratio.validate();
    if (preset) preset_delta(*preset);
    for (std::size_t w : fixed_windows)
        if (w < 1) throw invalid_argument("fixed windows must be >= 1");
    if (mode == RunMode::compare && inputs.size() != 2) {
        throw invalid_argument("compare takes exactly two state files (reference, candidate)");
    }
}

std::string spec_echo(const RunSpec& spec) {
    ordered_json j;
    j["mode"]  = run_mode_name(spec.mode);
    j["model"] = {
        {"blocks", spec.model.num_blocks}, {"dim", spec.model.dim},         {"tokens", spec.model.tokens},
        {"frames", spec.model.frames},     {"steps", spec.model.steps},     {"seed", spec.model.seed},
        {"eta_min", spec.model.eta_min},   {"eta_max", spec.model.eta_max},
    };
    j["scheduler"] = {{"delta", spec.scheduler.delta}, {"window", spec.scheduler.window}};
    if (!spec.scheduler.per_step_delta.empty()) j["scheduler"]["per_step_delta"] = spec.scheduler.per_step_delta;
    j["preset"]      = spec.preset ? ordered_json(*spec.preset) : ordered_json(nullptr);
    j["ratio"]       = {{"lo", spec.ratio.lo}, {"hi", spec.ratio.hi}};
    j["aggregation"] = aggregation_name(spec.aggregation);
    j["prune"]       = spec.prune;
    if (spec.mode == RunMode::harness) j["fixed_windows"] = spec.fixed_windows;
    return j.dump();
}

namespace {

void reject_unknown(const ordered_json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw invalid_argument("config: '" + where + "' must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) throw invalid_argument("config: unknown key '" + where + key + "'");
    }
}

template <typename T>
void read(const ordered_json& obj, const char* key, T& dst) {
    if (obj.contains(key)) dst = obj.at(key).get<T>();
}

}  // namespace

void apply_config(RunSpec& spec, std::string_view json_text) {
    ordered_json j;
    try {
        j = ordered_json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw invalid_argument(std::string("config: ") + e.what());
    }
    try {
        reject_unknown(j, {"model", "scheduler", "preset", "ratio", "aggregation", "mode", "prune", "out", "calib",
                           "baseline_trace", "profile", "fixed_windows"},
                       "");
        if (j.contains("model")) {
            const auto& m = j["model"];
            reject_unknown(m, {"blocks", "dim", "tokens", "frames", "steps", "seed", "eta_min", "eta_max"}, "model.");
            read(m, "blocks", spec.model.num_blocks);
            read(m, "dim", spec.model.dim);
            read(m, "tokens", spec.model.tokens);
            read(m, "frames", spec.model.frames);
            read(m, "steps", spec.model.steps);
            read(m, "seed", spec.model.seed);
            read(m, "eta_min", spec.model.eta_min);
            read(m, "eta_max", spec.model.eta_max);
        }
        if (j.contains("scheduler")) {
            const auto& s = j["scheduler"];
            reject_unknown(s, {"delta", "window", "per_step_delta"}, "scheduler.");
            read(s, "delta", spec.scheduler.delta);
            read(s, "window", spec.scheduler.window);
            read(s, "per_step_delta", spec.scheduler.per_step_delta);
        }
        if (j.contains("preset")) {
            spec.preset          = j["preset"].get<std::string>();
            spec.scheduler.delta = preset_delta(*spec.preset);
        }
        if (j.contains("ratio")) {
            const auto& r = j["ratio"];
            reject_unknown(r, {"lo", "hi"}, "ratio.");
            read(r, "lo", spec.ratio.lo);
            read(r, "hi", spec.ratio.hi);
        }
        if (j.contains("aggregation")) spec.aggregation = aggregation_from_name(j["aggregation"].get<std::string>());
        if (j.contains("mode")) {
            const DispatchMode m = dispatch_mode_from_name(j["mode"].get<std::string>());
            if (spec.mode == RunMode::unicp_online || spec.mode == RunMode::unicp_replay) {
                spec.mode = m == DispatchMode::online ? RunMode::unicp_online : RunMode::unicp_replay;
            }
        }
        read(j, "prune", spec.prune);
        if (j.contains("out")) spec.out = j["out"].get<std::string>();
        if (j.contains("calib")) spec.calib_dir = j["calib"].get<std::string>();
        if (j.contains("baseline_trace")) spec.baseline_trace = j["baseline_trace"].get<std::string>();
        if (j.contains("profile")) spec.profile = j["profile"].get<std::string>();
        read(j, "fixed_windows", spec.fixed_windows);
    } catch (const nlohmann::json::exception& e) {
        throw invalid_argument(std::string("config: ") + e.what());
    }
}

}  // namespace unicp::cli
