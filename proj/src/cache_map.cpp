#include "unicp/dws.hpp"
#include "unicp/error.hpp"

#include <cstdlib>
#include <sstream>
#include <string>

namespace unicp {

namespace {

constexpr std::string_view kMagic = "unicp-cache-map 1";

class LineReader {
public:
    explicit LineReader(std::string_view text) : is_(std::string(text)) {}

    // Next line that is not a '#' comment.
    std::string next() {
        std::string line;
        do {
            if (!std::getline(is_, line)) throw invalid_argument("cache map: unexpected end of document");
        } while (!line.empty() && line.front() == '#');
        return line;
    }

    // Reads "<key> <value>" and returns the value.
    std::string field(std::string_view key) {
        const std::string line = next();
        if (line.size() <= key.size() + 1 || line.compare(0, key.size(), key) != 0 || line[key.size()] != ' ') {
            throw invalid_argument("cache map: expected '" + std::string(key) + "', got '" + line + "'");
        }
        return line.substr(key.size() + 1);
    }

private:
    std::istringstream is_;
};

std::size_t to_count(const std::string& s) {
    char* end   = nullptr;
    const auto v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') throw invalid_argument("cache map: bad count '" + s + "'");
    return static_cast<std::size_t>(v);
}

double to_real(const std::string& s) {
    char* end      = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw invalid_argument("cache map: bad number '" + s + "'");
    return v;
}

}  // namespace

std::string cache_map_export(const CacheMap& map) {
    std::ostringstream os;
    os << kMagic << '\n';
    os << "blocks " << map.model.num_blocks << '\n';
    os << "dim " << map.model.dim << '\n';
    os << "tokens " << map.model.tokens << '\n';
    os << "frames " << map.model.frames << '\n';
    os << "steps " << map.model.steps << '\n';
    os << "seed " << map.model.seed << '\n';
    os << "eta_min " << format_real(map.model.eta_min) << '\n';
    os << "eta_max " << format_real(map.model.eta_max) << '\n';
    os << "delta " << format_real(map.delta) << '\n';
    os << "window " << map.window << '\n';
    os << "ratio_lo " << format_real(map.ratio.lo) << '\n';
    os << "ratio_hi " << format_real(map.ratio.hi) << '\n';
    os << "mode " << dispatch_mode_name(map.mode) << '\n';
    os << "aggregation " << aggregation_name(map.aggregation) << '\n';
    os << "grid t=" << map.model.steps << "..1\n";
    for (std::size_t b = 0; b < map.model.num_blocks; ++b)
        for (AttnKind kind : {AttnKind::spatial, AttnKind::temporal})
            os << b << ' ' << attn_kind_name(kind) << ' ' << map.grid[unit_index(b, kind)] << '\n';
    os << "final_n\n";
    for (std::size_t b = 0; b < map.model.num_blocks; ++b)
        for (AttnKind kind : {AttnKind::spatial, AttnKind::temporal})
            if (const auto& n = map.final_n[unit_index(b, kind)]) os << b << ' ' << attn_kind_name(kind) << ' ' << *n << '\n';
    os << "end\n";
    return os.str();
}

CacheMap cache_map_import(std::string_view text) {
    LineReader in(text);
    if (in.next() != kMagic) throw invalid_argument("cache map: bad magic line");
    CacheMap map;
    map.model.num_blocks = to_count(in.field("blocks"));
    map.model.dim        = to_count(in.field("dim"));
    map.model.tokens     = to_count(in.field("tokens"));
    map.model.frames     = to_count(in.field("frames"));
    map.model.steps      = to_count(in.field("steps"));
    map.model.seed       = to_count(in.field("seed"));
    map.model.eta_min    = to_real(in.field("eta_min"));
    map.model.eta_max    = to_real(in.field("eta_max"));
    map.delta            = to_real(in.field("delta"));
    map.window           = to_count(in.field("window"));
    map.ratio.lo         = to_real(in.field("ratio_lo"));
    map.ratio.hi         = to_real(in.field("ratio_hi"));
    map.mode             = dispatch_mode_from_name(in.field("mode"));
    map.aggregation      = aggregation_from_name(in.field("aggregation"));
    map.model.validate();

    const std::string grid_line = "grid t=" + std::to_string(map.model.steps) + "..1";
    if (in.next() != grid_line) throw invalid_argument("cache map: expected '" + grid_line + "'");
    const std::size_t units = map.model.num_blocks * kAttnKinds;
    map.grid.assign(units, {});
    map.final_n.assign(units, std::nullopt);
    for (std::size_t b = 0; b < map.model.num_blocks; ++b)
        for (AttnKind kind : {AttnKind::spatial, AttnKind::temporal}) {
            std::istringstream row(in.next());
            std::size_t block = 0;
            std::string kind_name, cells, extra;
            if (!(row >> block >> kind_name >> cells) || (row >> extra) || block != b ||
                attn_kind_from_name(kind_name) != kind) {
                throw invalid_argument("cache map: grid row out of order for block " + std::to_string(b));
            }
            map.grid[unit_index(b, kind)] = cells;
        }
    if (in.next() != "final_n") throw invalid_argument("cache map: expected 'final_n'");
    for (std::string line = in.next(); line != "end"; line = in.next()) {
        std::istringstream row(line);
        std::size_t block = 0, n = 0;
        std::string kind_name;
        if (!(row >> block >> kind_name >> n) || block >= map.model.num_blocks) {
            throw invalid_argument("cache map: bad final_n row '" + line + "'");
        }
        map.final_n[unit_index(block, attn_kind_from_name(kind_name))] = n;
    }
    map.validate();
    return map;
}

}  // namespace unicp
