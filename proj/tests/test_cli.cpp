#include "unicp/cli.hpp"
#include "unicp/container.hpp"
#include "unicp/error.hpp"
#include "unicp/quality.hpp"
#include "unicp/trace.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace unicp;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "unicp");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

const std::vector<std::string> kSmall = {"--blocks", "2", "--dim", "8", "--tokens", "16", "--frames", "4", "--steps", "10"};

std::vector<std::string> with_small(std::vector<std::string> args) {
    args.insert(args.end(), kSmall.begin(), kSmall.end());
    return args;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("unicp_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& leaf = "") const { return (leaf.empty() ? path : path / leaf).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

std::string slurp(const fs::path& p) { return read_file(p); }

// Reads a state file without the library decoder: 8 magic bytes, u32 version,
// six u64 and two f64 config fields, then raw little-endian doubles.
std::vector<double> raw_state_values(const fs::path& p) {
    const std::string bytes = slurp(p);
    const std::size_t header = 8 + 4 + 6 * 8 + 2 * 8;
    REQUIRE(bytes.size() >= header);
    REQUIRE((bytes.size() - header) % 8 == 0);
    std::vector<double> out((bytes.size() - header) / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[header + 8 * i + b])) << (8 * b);
        std::memcpy(&out[i], &bits, 8);
    }
    return out;
}

}  // namespace

TEST_CASE("help and argument errors") {
    CHECK(run({"--help"}).code == 0);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"baseline", "--window", "abc"}).code == 2);
    TempDir d;
    CHECK(run(with_small({"baseline", "--out", d.str(), "--dim", "2"})).code == 2);
    CHECK(run(with_small({"run", "--out", d.str(), "--preset", "E9"})).code == 2);
    CHECK(run(with_small({"run", "--out", d.str(), "--preset", "E1", "--delta", "0.1"})).code == 2);
    CHECK(run(with_small({"run", "--out", d.str(), "--mode", "sideways"})).code == 2);
    CHECK(run(with_small({"calibrate", "--out", d.str(), "--ratio-lo", "0.5", "--ratio-hi", "0.2"})).code == 2);
    CHECK(run(with_small({"baseline", "--out", d.str(), "--config", d.str("nope.json")})).code == 2);
}

TEST_CASE("config files apply and flags win") {
    TempDir d;
    write_file(d.path / "cfg.json",
               R"({"model": {"blocks": 2, "dim": 8, "tokens": 16, "frames": 4, "steps": 10, "seed": 5},
                   "scheduler": {"window": 3}, "preset": "E2", "ratio": {"lo": 0.1, "hi": 0.3}})");
    cli::RunSpec spec;
    cli::apply_config(spec, slurp(d.path / "cfg.json"));
    CHECK(spec.model.dim == 8);
    CHECK(spec.model.seed == 5);
    CHECK(spec.scheduler.window == 3);
    CHECK(spec.scheduler.delta == 0.05);
    CHECK(spec.ratio.hi == 0.3);

    const Result r = run({"baseline", "--config", d.str("cfg.json"), "--seed", "6", "--out", d.str("o")});
    REQUIRE(r.code == 0);
    CHECK(slurp(d.path / "o" / cli::kBaselineTrace).find("\"seed\":6") != std::string::npos);

    write_file(d.path / "bad.json", R"({"model": {"width": 3}})");
    CHECK(run({"baseline", "--config", d.str("bad.json"), "--out", d.str("o")}).code == 2);
    write_file(d.path / "broken.json", "{");
    CHECK(run({"baseline", "--config", d.str("broken.json"), "--out", d.str("o")}).code == 2);
}

TEST_CASE("presets") {
    CHECK(cli::preset_delta("E1") == 0.025);
    CHECK(cli::preset_delta("E2") == 0.05);
    CHECK(cli::preset_delta("E3") == 0.075);
    CHECK(cli::preset_delta("E4") == 0.125);
    CHECK(cli::preset_delta("E5") == 0.175);
    CHECK_THROWS_AS(cli::preset_delta("e5"), Error);
}

TEST_CASE("baseline artifacts, MAC total and determinism") {
    TempDir a, b;
    const Result r1 = run(with_small({"baseline", "--out", a.str()}));
    const Result r2 = run(with_small({"baseline", "--out", b.str()}));
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    for (auto leaf : {cli::kBaselineState, cli::kBaselineTrace})
        CHECK(slurp(a.path / leaf) == slurp(b.path / leaf));
    ModelConfig c;
    c.num_blocks = 2;
    c.dim        = 8;
    c.tokens     = 16;
    c.frames     = 4;
    c.steps      = 10;
    const RunTrace t = trace_parse(slurp(a.path / cli::kBaselineTrace));
    CHECK(t.totals().macs_total == baseline_macs_per_step(c) * c.steps);
    const std::string text = slurp(a.path / cli::kBaselineTrace);
    CHECK(text.rfind("# unicp baseline\n# spec {", 0) == 0);
}

TEST_CASE("zero-threshold run without pruning is byte-identical to the baseline") {
    TempDir d;
    REQUIRE(run(with_small({"baseline", "--out", d.str()})).code == 0);
    const Result r = run(with_small({"run", "--delta", "0", "--no-prune", "--out", d.str(), "--baseline-trace",
                                     d.str(std::string(cli::kBaselineTrace))}));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("MAC ratio") != std::string::npos);
    CHECK(slurp(d.path / cli::kRunState) == slurp(d.path / cli::kBaselineState));
    const Result cmp = run({"compare", d.str(std::string(cli::kBaselineState)), d.str(std::string(cli::kRunState)),
                            "--out", d.str("q")});
    REQUIRE(cmp.code == 0);
    const auto report = nlohmann::json::parse(cmp.out);
    CHECK(report["psnr_db"].get<double>() == 99.0);
    CHECK(report["ssim"].get<double>() == 1.0);
    CHECK(report["rel_l2"].get<double>() == 0.0);
}

TEST_CASE("calibrate then replay: tallies, artifacts and determinism") {
    TempDir a, b;
    for (const TempDir* d : {&a, &b}) {
        const Result c = run(with_small({"calibrate", "--preset", "E5", "--out", d->str()}));
        REQUIRE(c.code == 0);
        CHECK(c.out.find("final_n") != std::string::npos);
        REQUIRE(run(with_small({"run", "--preset", "E5", "--mode", "replay", "--out", d->str()})).code == 0);
        REQUIRE(run(with_small({"run", "--preset", "E5", "--mode", "online", "--out", d->str() + "/online"})).code == 0);
    }
    for (auto leaf : {cli::kCacheMap, cli::kSlicedWeights, cli::kCalibRecords, cli::kRunState, cli::kRunTrace,
                      cli::kRunMap})
        CHECK(slurp(a.path / leaf) == slurp(b.path / leaf));
    CHECK(slurp(a.path / "online" / cli::kRunState) == slurp(b.path / "online" / cli::kRunState));

    const CacheMap plan = cache_map_import(slurp(a.path / cli::kCacheMap));
    for (const auto& n : plan.final_n) CHECK(n.has_value());
    const RunTrace t = trace_parse(slurp(a.path / cli::kRunTrace));
    CHECK(t.totals().attention_decisions == plan.tallies());
    CHECK(slurp(a.path / cli::kCacheMap).rfind("# unicp calibrate\n# spec {", 0) == 0);
    CHECK(slurp(a.path / cli::kCacheMap).find("\"delta\":0.175") != std::string::npos);
}

TEST_CASE("replay without calibration artifacts exits 3") {
    TempDir d;
    const Result r = run(with_small({"run", "--mode", "replay", "--out", d.str()}));
    CHECK(r.code == 3);
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("replay against artifacts of another model exits 2") {
    TempDir d;
    REQUIRE(run(with_small({"calibrate", "--out", d.str()})).code == 0);
    CHECK(run(with_small({"run", "--mode", "replay", "--out", d.str(), "--seed", "99"})).code == 2);
}

TEST_CASE("compare: missing files, shape mismatch, and recomputed metrics") {
    TempDir d;
    CHECK(run({"compare", d.str("a.bin"), d.str("b.bin"), "--out", d.str()}).code == 3);
    CHECK(run({"compare", d.str("a.bin"), "--out", d.str()}).code == 2);

    REQUIRE(run(with_small({"baseline", "--out", d.str("base")})).code == 0);
    REQUIRE(run({"baseline", "--blocks", "1", "--dim", "8", "--tokens", "16", "--frames", "3", "--steps", "4", "--out",
                 d.str("other")})
                .code == 0);
    CHECK(run({"compare", d.str("base/" + std::string(cli::kBaselineState)),
               d.str("other/" + std::string(cli::kBaselineState)), "--out", d.str()})
              .code == 2);

    REQUIRE(run(with_small({"run", "--preset", "E5", "--out", d.str("fast")})).code == 0);
    const fs::path ref  = d.path / "base" / cli::kBaselineState;
    const fs::path cand = d.path / "fast" / cli::kRunState;
    const Result r      = run({"compare", ref.string(), cand.string(), "--out", d.str("q")});
    REQUIRE(r.code == 0);
    const auto report = nlohmann::json::parse(slurp(d.path / "q" / cli::kQualityReport));

    // Independent recomputation from the raw bytes.
    const auto a = raw_state_values(ref);
    const auto b = raw_state_values(cand);
    REQUIRE(a.size() == b.size());
    double lo = a[0], hi = a[0], sq = 0.0, ref_sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        lo = std::min(lo, a[i]);
        hi = std::max(hi, a[i]);
        sq += (a[i] - b[i]) * (a[i] - b[i]);
        ref_sq += a[i] * a[i];
    }
    const double mse  = sq / static_cast<double>(a.size());
    const double peak = hi - lo;
    CHECK(report["constants"]["peak"].get<double>() == doctest::Approx(peak).epsilon(1e-15));
    CHECK(report["mse"].get<double>() == doctest::Approx(mse).epsilon(1e-12));
    CHECK(report["psnr_db"].get<double>() == doctest::Approx(10.0 * std::log10(peak * peak / mse)).epsilon(1e-12));
    CHECK(report["rel_l2"].get<double>() == doctest::Approx(std::sqrt(sq / ref_sq)).epsilon(1e-12));

    // SSIM: 4x4 token grid, window 4, one position per channel and frame.
    const std::size_t frames = 4, tokens = 16, dim = 8;
    const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
    double total    = 0.0;
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t ch = 0; ch < dim; ++ch) {
            double ma = 0, mb = 0;
            for (std::size_t t = 0; t < tokens; ++t) {
                ma += a[(f * tokens + t) * dim + ch];
                mb += b[(f * tokens + t) * dim + ch];
            }
            ma /= tokens;
            mb /= tokens;
            double va = 0, vb = 0, cov = 0;
            for (std::size_t t = 0; t < tokens; ++t) {
                const double da = a[(f * tokens + t) * dim + ch] - ma;
                const double db = b[(f * tokens + t) * dim + ch] - mb;
                va += da * da;
                vb += db * db;
                cov += da * db;
            }
            va /= tokens;
            vb /= tokens;
            cov /= tokens;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    CHECK(report["ssim"].get<double>() == doctest::Approx(total / (frames * dim)).epsilon(1e-12));
    CHECK(report["constants"]["ssim_window"].get<int>() == 4);
}

TEST_CASE("harness command") {
    TempDir a, b;
    const Result r1 = run({"harness", "--out", a.str(), "--delta", "0.05"});
    const Result r2 = run({"harness", "--out", b.str(), "--delta", "0.05"});
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    CHECK(slurp(a.path / cli::kHarnessSteps) == slurp(b.path / cli::kHarnessSteps));
    CHECK(slurp(a.path / cli::kHarnessReport) == slurp(b.path / cli::kHarnessReport));
    const auto report = nlohmann::json::parse(slurp(a.path / cli::kHarnessReport));
    CHECK(report["edcw"]["armed_across_spike"].get<bool>() == false);
    for (const auto& f : report["fixed"])
        CHECK(report["edcw"]["accumulated_error"].get<double>() < f["accumulated_error"].get<double>());

    write_file(a.path / "p.txt", "T 5\ndelta 0.5\nK 2\n0\n0.1\n0.1\n0.1\n0.1\n");
    REQUIRE(run({"harness", "--profile", a.str("p.txt"), "--out", a.str("p")}).code == 0);
    auto pr = nlohmann::json::parse(slurp(a.path / "p" / cli::kHarnessReport));
    CHECK(pr["spec"]["scheduler"]["delta"].get<double>() == 0.5);
    CHECK(pr["spec"]["scheduler"]["window"].get<int>() == 2);
    // Flags override the profile header.
    REQUIRE(run({"harness", "--profile", a.str("p.txt"), "--window", "3", "--out", a.str("p")}).code == 0);
    pr = nlohmann::json::parse(slurp(a.path / "p" / cli::kHarnessReport));
    CHECK(pr["spec"]["scheduler"]["window"].get<int>() == 3);
    CHECK(run({"harness", "--profile", a.str("missing.txt"), "--out", a.str("p")}).code == 3);
    write_file(a.path / "bad.txt", "T 2\n0\n3.0\n");
    CHECK(run({"harness", "--profile", a.str("bad.txt"), "--out", a.str("p")}).code == 2);
}

TEST_CASE("numeric blow-up exits 4") {
    TempDir d;
    const Result r = run(with_small({"baseline", "--eta-max", "1e300", "--eta-min", "1e300", "--out", d.str()}));
    CHECK(r.code == 4);
}
