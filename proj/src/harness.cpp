#include "unicp/harness.hpp"

#include "unicp/error.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <sstream>

namespace unicp {

void DriftProfile::validate() const {
    if (drifts.empty()) throw invalid_argument("profile: no steps");
    for (double d : drifts)
        if (!(d >= 0.0)) throw invalid_argument("profile: drifts must be >= 0");
    for (const Spike& s : spikes) {
        if (s.step < 1 || s.step > drifts.size()) {
            throw invalid_argument("profile: spike step " + std::to_string(s.step) + " outside [1, " +
                                   std::to_string(drifts.size()) + "]");
        }
        if (!(s.magnitude >= 0.0)) throw invalid_argument("profile: spike magnitude must be >= 0");
    }
}

double DriftProfile::drift_at(std::size_t step) const {
    double d = drifts.at(drifts.size() - step);
    for (const Spike& s : spikes)
        if (s.step == step) d = s.magnitude;
    return d;
}

namespace {

Mat random_unit(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat out(rows, cols);
    for (double& v : out.values()) v = normal(rng);
    return scale(out, 1.0 / frobenius_norm(out));
}

// Removes the component of `v` along unit `u` and renormalizes.
Mat orthonormalize(const Mat& v, const Mat& u) {
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v.values()[i] * u.values()[i];
    Mat out = sub(v, scale(u, dot));
    return scale(out, 1.0 / frobenius_norm(out));
}

// With |B| = |D| = 1 and B orthogonal to D, |B + a D| = sqrt(1 + a^2), so a step
// of d * sqrt(1 + a^2) produces relative drift d.
double advance(double coeff, double drift) { return coeff + drift * std::sqrt(1.0 + coeff * coeff); }

}  // namespace

HarnessSequence synthesize_sequence(const DriftProfile& profile, std::size_t s, std::size_t m, std::uint64_t seed,
                                    double map_ratio) {
    profile.validate();
    if (s < 2 || m < 1) throw invalid_argument("synthesize_sequence: need s >= 2 and m >= 1");
    if (!(map_ratio >= 0.0)) throw invalid_argument("synthesize_sequence: map ratio must be >= 0");
    const std::size_t T = profile.steps();
    for (std::size_t t = 1; t <= T; ++t) {
        if (profile.drift_at(t) > kMaxScriptedDrift) {
            throw invalid_argument("synthesize_sequence: drift " + format_real(profile.drift_at(t)) + " at step " +
                                   std::to_string(t) + " exceeds " + format_real(kMaxScriptedDrift));
        }
    }

    std::mt19937_64 rng(seed);
    const Mat base = random_unit(s, m, rng);
    const Mat dir  = orthonormalize(random_unit(s, m, rng), base);

    // Uniform map scaled to unit norm, perturbed by a zero-row-sum direction.
    // The uniform part is orthogonal to any zero-row-sum matrix.
    const double uniform = 1.0 / static_cast<double>(s);
    const Mat a0(s, s, uniform);
    const double a0_norm = frobenius_norm(a0);
    Mat perturb          = random_unit(s, s, rng);
    for (std::size_t r = 0; r < s; ++r) {
        double mean = 0.0;
        for (double v : perturb.row(r)) mean += v;
        mean /= static_cast<double>(s);
        for (double& v : perturb.row(r)) v -= mean;
    }
    perturb = scale(perturb, a0_norm / frobenius_norm(perturb));

    HarnessSequence seq;
    double alpha = 0.0, beta = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
        const std::size_t step = T - i;
        if (i > 0) {
            const double d = profile.drift_at(step);
            alpha          = advance(alpha, d);
            beta           = advance(beta, d * map_ratio);
        }
        AttentionResult r;
        r.output = add(base, scale(dir, alpha));
        r.map    = add(a0, scale(perturb, beta));
        seq.steps.push_back(step);
        seq.results.push_back(std::move(r));
    }
    return seq;
}

HarnessResult run_scheduler_on_sequence(const HarnessSequence& seq, const SchedulerConfig& sched,
                                        const std::vector<std::size_t>& fixed_windows) {
    sched.validate(seq.steps.size());
    HarnessResult out;
    BlockCacheState state(sched.window);
    for (std::size_t i = 0; i < seq.steps.size(); ++i) {
        const std::size_t step   = seq.steps[i];
        const AttentionResult& r = seq.results[i];
        HarnessStep hs;
        hs.step = step;
        if (const ActiveCache* c = consume_cache(state, step)) {
            hs.executed    = c->kind == CacheKind::output ? DecisionKind::reuse_output : DecisionKind::reuse_map;
            hs.reuse_error = c->kind == CacheKind::output ? rel_l2(c->payload, r.output) : rel_l2(c->payload, r.map);
            out.accumulated_error += hs.reuse_error;
        } else {
            hs.computed = true;
            hs.executed = state.status() == CacheStatus::processed ? DecisionKind::pruned : DecisionKind::full;
            hs.decision = edcw_decide(state, r, step, sched);
            if (hs.decision.window > 0) {
                out.armed.push_back(ArmedWindow{step, hs.decision.window,
                                                hs.decision.kind == DecisionKind::reuse_output ? CacheKind::output
                                                                                               : CacheKind::map});
            }
        }
        out.steps.push_back(std::move(hs));
    }
    for (std::size_t w : fixed_windows) out.fixed.push_back(run_fixed_window(seq, w));
    return out;
}

HarnessResult run_scheduler_on_profile(const DriftProfile& profile, const SchedulerConfig& sched,
                                       const std::vector<std::size_t>& fixed_windows, std::size_t s, std::size_t m,
                                       std::uint64_t seed) {
    return run_scheduler_on_sequence(synthesize_sequence(profile, s, m, seed), sched, fixed_windows);
}

FixedWindowResult run_fixed_window(const HarnessSequence& seq, std::size_t window) {
    if (window < 1) throw invalid_argument("fixed window must be >= 1");
    FixedWindowResult out;
    out.window = window;
    const Mat* cached = nullptr;
    for (std::size_t i = 0; i < seq.results.size(); ++i) {
        const bool reuse = i % window != 0;
        out.reused.push_back(reuse);
        if (reuse) {
            out.accumulated_error += rel_l2(*cached, seq.results[i].output);
        } else {
            cached = &seq.results[i].output;
        }
    }
    return out;
}

bool window_spans(std::size_t step, std::size_t k, std::size_t spike_step) {
    return step <= spike_step && spike_step < step + k;
}

ProfileFile parse_profile(std::string_view text) {
    ProfileFile out;
    std::optional<std::size_t> declared_steps;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& why) {
        return invalid_argument("profile line " + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string head;
        if (!(ls >> head)) continue;
        std::string rest;
        if (head == "T") {
            std::size_t t = 0;
            if (!(ls >> t) || t == 0) throw fail("bad T");
            declared_steps = t;
        } else if (head == "delta") {
            if (!(ls >> out.sched.delta)) throw fail("bad delta");
        } else if (head == "K") {
            if (!(ls >> out.sched.window)) throw fail("bad K");
        } else if (head[0] == '@') {
            Spike sp{};
            try {
                sp.step = std::stoul(head.substr(1));
            } catch (const std::exception&) {
                throw fail("bad spike step");
            }
            if (!(ls >> sp.magnitude)) throw fail("bad spike magnitude");
            out.profile.spikes.push_back(sp);
        } else {
            std::size_t used = 0;
            double d         = 0.0;
            try {
                d = std::stod(head, &used);
            } catch (const std::exception&) {
                throw fail("unrecognized entry '" + head + "'");
            }
            if (used != head.size()) throw fail("unrecognized entry '" + head + "'");
            out.profile.drifts.push_back(d);
        }
        if (ls >> rest) throw fail("trailing text '" + rest + "'");
    }
    if (!declared_steps) throw invalid_argument("profile: missing T header");
    if (out.profile.drifts.size() != *declared_steps) {
        throw invalid_argument("profile: T is " + std::to_string(*declared_steps) + " but " +
                               std::to_string(out.profile.drifts.size()) + " drifts were given");
    }
    out.profile.validate();
    out.sched.validate(out.profile.steps());
    return out;
}

std::string format_profile(const ProfileFile& file) {
    std::string out = "T " + std::to_string(file.profile.steps()) + "\n";
    out += "delta " + format_real(file.sched.delta) + "\n";
    out += "K " + std::to_string(file.sched.window) + "\n";
    for (double d : file.profile.drifts) out += format_real(d) + "\n";
    for (const Spike& s : file.profile.spikes) out += "@" + std::to_string(s.step) + " " + format_real(s.magnitude) + "\n";
    return out;
}

DriftProfile u_profile(std::size_t steps, double edge, double middle, double edge_fraction) {
    DriftProfile p;
    const auto edge_steps = static_cast<std::size_t>(std::llround(edge_fraction * static_cast<double>(steps)));
    for (std::size_t i = 0; i < steps; ++i) {
        const bool at_edge = i < edge_steps || i >= steps - edge_steps;
        p.drifts.push_back(at_edge ? edge : middle);
    }
    return p;
}

}  // namespace unicp
