#include "oracles.hpp"
#include "unicp/error.hpp"
#include "unicp/harness.hpp"

#include <doctest.h>

using namespace unicp;

namespace {

DriftProfile spiked_u(std::size_t T, double edge, double middle, std::size_t spike_step, double spike) {
    DriftProfile p = u_profile(T, edge, middle);
    p.spikes.push_back({spike_step, spike});
    return p;
}

std::vector<double> measured_output_drifts(const HarnessSequence& seq) {
    std::vector<double> out{0.0};
    for (std::size_t i = 1; i < seq.results.size(); ++i)
        out.push_back(oracle::rel_diff(seq.results[i].output, seq.results[i - 1].output));
    return out;
}

// Oracle walk of the scheduler over a sequence: returns (step, kind, k) for computed steps.
std::vector<std::tuple<std::size_t, DecisionKind, std::size_t>> oracle_walk(const HarnessSequence& seq,
                                                                           const SchedulerConfig& cfg) {
    std::vector<std::tuple<std::size_t, DecisionKind, std::size_t>> out;
    std::vector<oracle::HistoryItem> hist;
    std::size_t serving = 0;
    for (std::size_t i = 0; i < seq.steps.size(); ++i) {
        if (serving > 0) {
            --serving;
            continue;
        }
        const std::size_t t = seq.steps[i];
        const auto d        = oracle::algorithm1(hist, seq.results[i].output, seq.results[i].map, t, cfg.window,
                                                 [&](std::size_t s) { return cfg.delta_at(s); });
        hist.push_back({t, &seq.results[i].output, &seq.results[i].map});
        if (hist.size() > cfg.window) hist.erase(hist.begin());
        out.emplace_back(t, d.kind, d.window);
        serving = d.window > 0 ? d.window - 1 : 0;
    }
    return out;
}

}  // namespace

TEST_CASE("profile validation") {
    DriftProfile p;
    CHECK_THROWS_AS(p.validate(), Error);
    p.drifts = {0.0, -0.1};
    CHECK_THROWS_AS(p.validate(), Error);
    p.drifts = {0.0, 0.1};
    p.spikes = {{3, 0.2}};
    CHECK_THROWS_AS(p.validate(), Error);
    p.spikes = {{1, 0.2}};
    CHECK_NOTHROW(p.validate());
    CHECK(p.drift_at(1) == 0.2);
    CHECK(p.drift_at(2) == 0.0);
}

TEST_CASE("all-zero profile gives a constant sequence") {
    DriftProfile p;
    p.drifts.assign(6, 0.0);
    const HarnessSequence seq = synthesize_sequence(p, 5, 3, 1);
    REQUIRE(seq.results.size() == 6);
    CHECK(seq.steps.front() == 6);
    CHECK(seq.steps.back() == 1);
    for (const auto& r : seq.results) {
        CHECK(r.output == seq.results[0].output);
        CHECK(r.map == seq.results[0].map);
    }
}

TEST_CASE("synthesized drifts match the profile") {
    DriftProfile p;
    p.drifts                  = {0.5, 0.0, 0.0, 0.5};
    const HarnessSequence seq = synthesize_sequence(p, 6, 4, 2);
    const auto d              = measured_output_drifts(seq);
    CHECK(std::abs(d[1] - 0.0) < 1e-6);
    CHECK(std::abs(d[2] - 0.0) < 1e-6);
    CHECK(std::abs(d[3] - 0.5) < 1e-6);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        DriftProfile r;
        for (int i = 0; i < 25; ++i) r.drifts.push_back(u(rng));
        const HarnessSequence s = synthesize_sequence(r, 8, 5, trial, 0.5);
        const auto md           = measured_output_drifts(s);
        for (std::size_t i = 1; i < md.size(); ++i) {
            CHECK(std::abs(md[i] - r.drifts[i]) < 1e-6);
            const double map_drift = oracle::rel_diff(s.results[i].map, s.results[i - 1].map);
            CHECK(std::abs(map_drift - 0.5 * r.drifts[i]) < 1e-6);
        }
        for (const auto& res : s.results)
            for (std::size_t row = 0; row < 8; ++row) {
                double sum = 0.0;
                for (double v : res.map.row(row)) sum += v;
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            }
    }
}

TEST_CASE("a spike changes only its own step") {
    const DriftProfile plain  = u_profile(12, 0.2, 0.01);
    DriftProfile spiked       = plain;
    spiked.spikes             = {{6, 0.7}};
    const auto a              = measured_output_drifts(synthesize_sequence(plain, 6, 4, 9));
    const auto b              = measured_output_drifts(synthesize_sequence(spiked, 6, 4, 9));
    const std::size_t idx     = 12 - 6;
    CHECK(std::abs(b[idx] - 0.7) < 1e-6);
    for (std::size_t i = 1; i < a.size(); ++i)
        if (i != idx) CHECK(std::abs(a[i] - b[i]) < 1e-6);
}

TEST_CASE("infeasible drift is rejected") {
    DriftProfile p;
    p.drifts = {0.0, 2.5};
    CHECK_THROWS_AS(synthesize_sequence(p, 4, 4, 1), Error);
    p.drifts = {0.0, 0.1};
    p.spikes = {{1, 2.01}};
    CHECK_THROWS_AS(synthesize_sequence(p, 4, 4, 1), Error);
    p.spikes = {{1, 2.0}};
    CHECK_NOTHROW(synthesize_sequence(p, 4, 4, 1));
}

TEST_CASE("U profile: the middle caches, the ends do not") {
    SchedulerConfig c;
    c.delta                = 0.05;
    c.window               = 4;
    const DriftProfile p   = u_profile(30, 0.2, 0.01);
    const HarnessResult r  = run_scheduler_on_profile(p, c);
    for (const HarnessStep& s : r.steps) {
        // Every lookback from the ends crosses a 0.2 change. A middle cache may
        // still be served into the tail, but nothing computed there arms.
        if (s.step >= 25) CHECK(s.computed);
        if (s.computed && (s.step >= 25 || s.step <= 6)) CHECK(s.decision.kind == DecisionKind::pruned);
    }
    std::size_t middle_reuse = 0;
    for (const HarnessStep& s : r.steps)
        if (!s.computed && s.step <= 22 && s.step >= 8) ++middle_reuse;
    CHECK(middle_reuse >= 8);
}

TEST_CASE("spike: the scheduler never arms across it, the fixed window reuses across it") {
    SchedulerConfig c;
    c.delta              = 0.05;
    c.window             = 4;
    const DriftProfile p = spiked_u(30, 0.2, 0.01, 15, 0.3);
    const HarnessResult r = run_scheduler_on_profile(p, c, {2, 3, 4});
    for (const ArmedWindow& a : r.armed) CHECK_FALSE(window_spans(a.step, a.window, 15));
    for (const FixedWindowResult& f : r.fixed) {
        CHECK(r.accumulated_error < f.accumulated_error);
        // Step 15 sits at execution index 15; window 3 happens to recompute there.
        if (f.window != 3) CHECK(f.reused[15]);
    }
}

TEST_CASE("a threshold above every drift caches maximally after warm-up") {
    SchedulerConfig c;
    c.delta               = 10.0;
    c.window              = 4;
    const HarnessResult r = run_scheduler_on_profile(u_profile(30, 0.2, 0.01), c);
    std::vector<std::size_t> windows;
    for (const HarnessStep& s : r.steps)
        if (s.computed) windows.push_back(s.decision.window);
    REQUIRE(windows.size() > 4);
    for (std::size_t i = 4; i < windows.size(); ++i) CHECK(windows[i] == 4);
    for (const HarnessStep& s : r.steps)
        if (!s.computed) CHECK(s.executed == DecisionKind::reuse_output);
}

TEST_CASE("decision sequences equal the oracle walk on many profiles") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 150; ++trial) {
        const std::size_t T = 6 + trial % 27;
        DriftProfile p;
        for (std::size_t i = 0; i < T; ++i) p.drifts.push_back(u(rng) < 0.6 ? 0.04 * u(rng) : 0.4 * u(rng));
        if (trial % 2 == 0) p.spikes.push_back({1 + trial % T, 0.5 * u(rng)});
        SchedulerConfig c;
        c.delta                   = 0.1 * u(rng);
        c.window                  = 1 + trial % 5;
        const HarnessSequence seq = synthesize_sequence(p, 6, 4, trial);
        const HarnessResult r     = run_scheduler_on_sequence(seq, c);
        const auto expected       = oracle_walk(seq, c);
        std::size_t j             = 0;
        for (const HarnessStep& s : r.steps) {
            if (!s.computed) continue;
            REQUIRE(j < expected.size());
            CHECK(s.step == std::get<0>(expected[j]));
            CHECK(s.decision.kind == std::get<1>(expected[j]));
            CHECK(s.decision.window == std::get<2>(expected[j]));
            ++j;
        }
        CHECK(j == expected.size());
    }
}

TEST_CASE("no armed window spans a spike on spiked U profiles") {
    for (std::size_t T = 10; T <= 32; ++T) {
        for (std::size_t spike_step = 3; spike_step + 2 <= T; ++spike_step) {
            for (double delta : {0.03, 0.05, 0.1}) {
                SchedulerConfig c;
                c.delta               = delta;
                c.window              = 4;
                const DriftProfile p  = spiked_u(T, 0.2, 0.01, spike_step, 0.3);
                const HarnessResult r = run_scheduler_on_profile(p, c, {2, 3, 4, 5});
                CAPTURE(T);
                CAPTURE(spike_step);
                CAPTURE(delta);
                for (const ArmedWindow& a : r.armed) CHECK_FALSE(window_spans(a.step, a.window, spike_step));
            }
        }
    }
}

TEST_CASE("accumulated reuse error beats every fixed window on the thirty-step U profile, any spike position") {
    const std::size_t T = 30;
    for (std::size_t spike_step = 1; spike_step <= T; ++spike_step) {
        for (double delta : {0.03, 0.05, 0.1}) {
            SchedulerConfig c;
            c.delta               = delta;
            c.window              = 4;
            const DriftProfile p  = spiked_u(T, 0.2, 0.01, spike_step, 0.3);
            const HarnessResult r = run_scheduler_on_profile(p, c, {2, 3, 4, 5, 6, 8});
            CAPTURE(spike_step);
            CAPTURE(delta);
            for (const FixedWindowResult& f : r.fixed) CHECK(r.accumulated_error < f.accumulated_error);
        }
    }
}

// Dominance is length dependent: in the quiet middle EDCW serves a cache for
// up to K - 1 steps while a window of 2 serves it for one, so on some lengths
// the fixed comparator wins. This pins one such case so the limit stays visible.
TEST_CASE("fixed window of two can beat the scheduler on other lengths") {
    SchedulerConfig c;
    c.delta               = 0.05;
    c.window              = 4;
    const DriftProfile p  = spiked_u(32, 0.2, 0.01, 16, 0.3);
    const HarnessResult r = run_scheduler_on_profile(p, c, {2});
    REQUIRE(r.fixed.size() == 1);
    CHECK(r.fixed[0].accumulated_error < r.accumulated_error);
}

TEST_CASE("profile files") {
    const std::string text = "# scripted\nT 4\ndelta 0.05\nK 3\n0\n0.2\n0.01 # middle\n0.2\n@2 0.3\n";
    const ProfileFile f    = parse_profile(text);
    CHECK(f.profile.drifts == std::vector<double>{0.0, 0.2, 0.01, 0.2});
    REQUIRE(f.profile.spikes.size() == 1);
    CHECK(f.profile.spikes[0].step == 2);
    CHECK(f.profile.spikes[0].magnitude == 0.3);
    CHECK(f.sched.delta == 0.05);
    CHECK(f.sched.window == 3);
    const ProfileFile back = parse_profile(format_profile(f));
    CHECK(back.profile.drifts == f.profile.drifts);
    CHECK(back.sched.delta == f.sched.delta);
    CHECK(format_profile(back) == format_profile(f));

    CHECK_THROWS_AS(parse_profile("delta 0.1\n0\n"), Error);
    CHECK_THROWS_AS(parse_profile("T 3\n0\n0.1\n"), Error);
    CHECK_THROWS_AS(parse_profile("T 2\n0\nabc\n"), Error);
    CHECK_THROWS_AS(parse_profile("T 2\n0\n0.1 0.2\n"), Error);
    CHECK_THROWS_AS(parse_profile("T 2\n0\n0.1\n@9 0.1\n"), Error);
    CHECK_THROWS_AS(parse_profile("T 2\nK 0\n0\n0.1\n"), Error);
}
