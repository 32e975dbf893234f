#include "unicp/trace.hpp"

#include "unicp/error.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace unicp {

DecisionKind decision_from_letter(char c) {
    switch (c) {
        case 'F': return DecisionKind::full;
        case 'O': return DecisionKind::reuse_output;
        case 'M': return DecisionKind::reuse_map;
        case 'P': return DecisionKind::pruned;
        default: break;
    }
    throw invalid_argument(std::string("unknown decision letter '") + c + "'");
}

AttnKind attn_kind_from_name(std::string_view name) {
    if (name == "spatial") return AttnKind::spatial;
    if (name == "temporal") return AttnKind::temporal;
    throw invalid_argument("unknown attention kind '" + std::string(name) + "'");
}

std::string_view row_kind_name(RowKind k) {
    switch (k) {
        case RowKind::spatial: return "spatial";
        case RowKind::temporal: return "temporal";
        case RowKind::mlp: return "mlp";
    }
    return "?";
}

namespace {

RowKind row_kind_from_name(std::string_view name) {
    if (name == "spatial") return RowKind::spatial;
    if (name == "temporal") return RowKind::temporal;
    if (name == "mlp") return RowKind::mlp;
    throw invalid_argument("trace: unknown row kind '" + std::string(name) + "'");
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, delim)) out.push_back(field);
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

double parse_real(const std::string& s) {
    if (s.empty()) return kNotMeasured;
    char* end      = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw invalid_argument("trace: bad number '" + s + "'");
    return v;
}

unsigned long long parse_count(const std::string& s) {
    if (s.empty()) return 0;
    char* end   = nullptr;
    const auto v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') throw invalid_argument("trace: bad count '" + s + "'");
    return v;
}

}  // namespace

std::string format_real(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

TraceTotals RunTrace::totals() const {
    TraceTotals t;
    for (const auto& r : rows) {
        t.macs_total += r.macs;
        const auto d = static_cast<std::size_t>(r.decision);
        ++t.decisions[d];
        if (r.kind != RowKind::mlp) {
            t.attention_macs += r.macs;
            ++t.attention_decisions[d];
        }
    }
    return t;
}

std::size_t RunTrace::attention_rows() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.kind != RowKind::mlp;
    return n;
}

std::string trace_export(const RunTrace& trace, const std::vector<std::string>& preamble) {
    std::ostringstream os;
    for (const auto& line : preamble) os << "# " << line << '\n';
    os << kTraceHeader << '\n';
    for (const auto& r : trace.rows) {
        os << r.step << ',' << r.block << ',' << row_kind_name(r.kind) << ','
           << decision_letter(r.decision) << ',';
        if (r.k > 0) os << r.k;
        os << ',' << format_real(r.drift_output) << ',' << format_real(r.drift_map) << ','
           << r.macs << '\n';
    }
    return os.str();
}

RunTrace trace_parse(std::string_view text) {
    RunTrace trace;
    std::istringstream is{std::string(text)};
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.empty() || line.front() == '#') continue;
        if (!header_seen) {
            if (line != kTraceHeader) throw invalid_argument("trace: unexpected header '" + line + "'");
            header_seen = true;
            continue;
        }
        const auto f = split(line, ',');
        if (f.size() != 8 || f[3].size() != 1) {
            throw invalid_argument("trace: malformed row '" + line + "'");
        }
        TraceRow r;
        r.step         = parse_count(f[0]);
        r.block        = parse_count(f[1]);
        r.kind         = row_kind_from_name(f[2]);
        r.decision     = decision_from_letter(f[3][0]);
        r.k            = parse_count(f[4]);
        r.drift_output = parse_real(f[5]);
        r.drift_map    = parse_real(f[6]);
        r.macs         = parse_count(f[7]);
        trace.rows.push_back(r);
    }
    if (!header_seen) throw invalid_argument("trace: missing header");
    return trace;
}

}  // namespace unicp
