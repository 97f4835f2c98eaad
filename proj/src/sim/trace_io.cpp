#include "tcdrguard/sim.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <system_error>

namespace tcdr::sim {

namespace {

// %.17g round-trips IEEE doubles exactly and is locale-independent via
// std::to_chars on the parse side.
void append_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

double parse_double(std::string_view s) {
    double v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError("malformed floating-point field: '" + std::string(s) + "'");
    return v;
}

} // namespace

std::string window_to_record(const MeasurementWindow& w) {
    if (w.scenario_id.find(',') != std::string::npos ||
        w.scenario_id.find('\n') != std::string::npos)
        throw DataError("scenario_id must not contain ',' or newline");
    std::string out = w.scenario_id;
    out += ',';
    out += to_string(w.label);
    out += ',';
    out += std::to_string(w.trigger_index);
    for (const auto& row : w.values)
        for (double v : row) {
            out += ',';
            append_double(out, v);
        }
    return out;
}

MeasurementWindow window_from_record(const std::string& line) {
    std::vector<std::string_view> fields;
    fields.reserve(3 + kWindowSamples * kChannels);
    size_t start = 0;
    const std::string_view sv = line;
    while (true) {
        const size_t comma = sv.find(',', start);
        fields.push_back(sv.substr(start, comma == std::string_view::npos ? comma : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    const size_t expected = 3 + kWindowSamples * kChannels;
    if (fields.size() != expected)
        throw DataError("expected " + std::to_string(expected) + " fields, found " +
                        std::to_string(fields.size()));

    MeasurementWindow w;
    w.scenario_id = std::string(fields[0]);
    w.label = label_from_string(std::string(fields[1]));
    {
        int ti{};
        const auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), ti);
        if (ec != std::errc() || ptr != fields[2].data() + fields[2].size())
            throw DataError("malformed trigger_index");
        w.trigger_index = ti;
    }
    size_t f = 3;
    for (int t = 0; t < kWindowSamples; ++t)
        for (int c = 0; c < kChannels; ++c) {
            const double v = parse_double(fields[f++]);
            if (!std::isfinite(v)) throw DataError("non-finite value in record");
            w.values[t][c] = v;
        }
    w.source = WindowSource::Ingested;
    w.validate();
    return w;
}

void write_trace_csv(const SignalTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "t,Ain,Bin,Cin,Aout,Bout,Cout\n";
    std::string line;
    for (size_t i = 0; i < trace.size(); ++i) {
        line.clear();
        append_double(line, trace.time_at(i));
        for (int c = 0; c < kChannels; ++c) {
            line += ',';
            append_double(line, trace.samples[c][i]);
        }
        out << line << '\n';
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

} // namespace tcdr::sim
