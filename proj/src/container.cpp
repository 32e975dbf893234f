#include "unicp/container.hpp"

#include "unicp/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace unicp {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::string_view kWeightsMagic = "UNICPWTS";
constexpr std::string_view kSlicedMagic  = "UNICPSLC";
constexpr std::string_view kStateMagic   = "UNICPSTA";

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T value) {
    std::uint64_t bits = 0;
    if constexpr (std::is_same_v<T, double>) {
        bits = std::bit_cast<std::uint64_t>(value);
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > bytes_.size()) throw invalid_argument("container: truncated payload");
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        if constexpr (std::is_same_v<T, double>) {
            return std::bit_cast<double>(bits);
        } else {
            return static_cast<T>(bits);
        }
    }

    std::string_view take(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw invalid_argument("container: truncated header");
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    void expect_end() const {
        if (pos_ != bytes_.size()) throw invalid_argument("container: trailing bytes");
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void put_header(std::string& out, std::string_view magic, const ModelConfig& cfg) {
    out.append(magic);
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint64_t>(out, cfg.num_blocks);
    put_le<std::uint64_t>(out, cfg.dim);
    put_le<std::uint64_t>(out, cfg.tokens);
    put_le<std::uint64_t>(out, cfg.frames);
    put_le<std::uint64_t>(out, cfg.steps);
    put_le<std::uint64_t>(out, cfg.seed);
    put_le<double>(out, cfg.eta_min);
    put_le<double>(out, cfg.eta_max);
}

ModelConfig get_header(Reader& in, std::string_view magic) {
    if (in.take(magic.size()) != magic) throw invalid_argument("container: expected magic " + std::string(magic));
    const auto version = in.get<std::uint32_t>();
    if (version != kVersion) throw invalid_argument("container: unsupported version " + std::to_string(version));
    ModelConfig cfg;
    cfg.num_blocks = in.get<std::uint64_t>();
    cfg.dim        = in.get<std::uint64_t>();
    cfg.tokens     = in.get<std::uint64_t>();
    cfg.frames     = in.get<std::uint64_t>();
    cfg.steps      = in.get<std::uint64_t>();
    cfg.seed       = in.get<std::uint64_t>();
    cfg.eta_min    = in.get<double>();
    cfg.eta_max    = in.get<double>();
    cfg.validate();
    return cfg;
}

void put_mat(std::string& out, const Mat& m) {
    for (double v : m.values()) put_le<double>(out, v);
}

Mat get_mat(Reader& in, std::size_t rows, std::size_t cols) {
    std::vector<double> data(rows * cols);
    for (double& v : data) v = in.get<double>();
    return Mat(rows, cols, std::move(data));
}

void put_attention(std::string& out, const AttentionWeights& w) {
    put_mat(out, w.w_q);
    put_mat(out, w.w_k);
    put_mat(out, w.w_v);
    put_mat(out, w.w_o);
}

AttentionWeights get_attention(Reader& in, std::size_t m) {
    AttentionWeights w;
    w.w_q = get_mat(in, m, m);
    w.w_k = get_mat(in, m, m);
    w.w_v = get_mat(in, m, m);
    w.w_o = get_mat(in, m, m);
    return w;
}

}  // namespace

std::string encode_weights(const Model& model) {
    std::string out;
    put_header(out, kWeightsMagic, model.config);
    for (const Block& b : model.blocks) {
        put_attention(out, b.spatial);
        put_attention(out, b.temporal);
        put_mat(out, b.mlp.w1);
        put_mat(out, b.mlp.b1);
        put_mat(out, b.mlp.w2);
        put_mat(out, b.mlp.b2);
    }
    return out;
}

Model decode_weights(std::string_view bytes) {
    Reader in(bytes);
    Model model;
    model.config        = get_header(in, kWeightsMagic);
    const std::size_t m = model.config.dim;
    for (std::size_t i = 0; i < model.config.num_blocks; ++i) {
        Block b;
        b.spatial  = get_attention(in, m);
        b.temporal = get_attention(in, m);
        b.mlp.w1   = get_mat(in, m, 2 * m);
        b.mlp.b1   = get_mat(in, 1, 2 * m);
        b.mlp.w2   = get_mat(in, 2 * m, m);
        b.mlp.b2   = get_mat(in, 1, m);
        model.blocks.push_back(std::move(b));
    }
    in.expect_end();
    return model;
}

std::string encode_sliced(const ModelConfig& cfg, const UnitSlices& sliced) {
    std::string out;
    put_header(out, kSlicedMagic, cfg);
    std::uint64_t count = 0;
    for (const auto& s : sliced) count += s.has_value();
    put_le<std::uint64_t>(out, count);
    for (std::size_t u = 0; u < sliced.size(); ++u) {
        if (!sliced[u]) continue;
        put_le<std::uint64_t>(out, u / kAttnKinds);
        put_le<std::uint64_t>(out, u % kAttnKinds);
        put_le<std::uint64_t>(out, sliced[u]->n);
        put_le<std::uint64_t>(out, sliced[u]->basis->calib_steps.size());
        for (std::size_t s : sliced[u]->basis->calib_steps) put_le<std::uint64_t>(out, s);
    }
    for (const auto& s : sliced) {
        if (!s) continue;
        put_mat(out, s->basis->rotation);
        for (double v : s->basis->eigenvalues) put_le<double>(out, v);
        put_mat(out, s->wq_sliced);
        put_mat(out, s->wk_sliced);
    }
    return out;
}

UnitSlices decode_sliced(std::string_view bytes, ModelConfig* cfg_out) {
    Reader in(bytes);
    const ModelConfig cfg = get_header(in, kSlicedMagic);
    const std::size_t m   = cfg.dim;
    const std::size_t units = cfg.num_blocks * kAttnKinds;
    const auto count      = in.get<std::uint64_t>();
    if (count > units) throw invalid_argument("container: more sliced units than the model has");

    struct Entry {
        std::size_t unit, n;
        std::vector<std::size_t> steps;
    };
    std::vector<Entry> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
        Entry e;
        const auto block = in.get<std::uint64_t>();
        const auto kind  = in.get<std::uint64_t>();
        e.n              = in.get<std::uint64_t>();
        const auto nsteps = in.get<std::uint64_t>();
        if (block >= cfg.num_blocks || kind >= kAttnKinds || e.n < 1 || e.n > m || nsteps > cfg.steps) {
            throw invalid_argument("container: bad sliced unit header");
        }
        e.unit = block * kAttnKinds + kind;
        for (std::uint64_t j = 0; j < nsteps; ++j) e.steps.push_back(in.get<std::uint64_t>());
        entries.push_back(std::move(e));
    }
    UnitSlices out(units);
    for (const Entry& e : entries) {
        auto basis        = std::make_shared<PcaBasis>();
        basis->rotation   = get_mat(in, m, m);
        basis->eigenvalues.resize(m);
        for (double& v : basis->eigenvalues) v = in.get<double>();
        basis->calib_steps = e.steps;
        SlicedWeights sw;
        sw.n         = e.n;
        sw.wq_sliced = get_mat(in, m, e.n);
        sw.wk_sliced = get_mat(in, m, e.n);
        sw.basis     = std::move(basis);
        out[e.unit]  = std::move(sw);
    }
    in.expect_end();
    if (cfg_out != nullptr) *cfg_out = cfg;
    return out;
}

std::string encode_state(const ModelConfig& cfg, const LatentState& state) {
    if (state.frames != cfg.frames || state.tokens != cfg.tokens || state.dim != cfg.dim) {
        throw invalid_argument("encode_state: state shape does not match config");
    }
    std::string out;
    put_header(out, kStateMagic, cfg);
    for (const Mat& frame : state.values) put_mat(out, frame);
    return out;
}

LatentState decode_state(std::string_view bytes, ModelConfig* cfg_out) {
    Reader in(bytes);
    const ModelConfig cfg = get_header(in, kStateMagic);
    LatentState state     = LatentState::zeros(cfg.frames, cfg.tokens, cfg.dim);
    for (Mat& frame : state.values) frame = get_mat(in, cfg.tokens, cfg.dim);
    in.expect_end();
    if (cfg_out != nullptr) *cfg_out = cfg;
    return state;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::missing_artifact, "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw invalid_argument("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw invalid_argument("failed writing " + path.string());
}

}  // namespace unicp
