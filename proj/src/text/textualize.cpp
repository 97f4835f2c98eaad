#include "tcdrguard/textualize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tcdr::text {

namespace {

constexpr const char* kPhaseNames[3] = {"A", "B", "C"};

std::string baseline_header(int phase, bool input_side) {
    std::string s = "Transformer Differential Relay's current measurement vector of phase ";
    s += kPhaseNames[phase];
    s += " on transformer ";
    s += input_side ? "input" : "output";
    s += " side: ";
    return s;
}

std::string v1_header(int phase, bool input_side) {
    std::string s = "Differential relay phase ";
    s += kPhaseNames[phase];
    s += " current measurements at transformer ";
    s += input_side ? "input" : "output";
    s += " side: ";
    return s;
}

} // namespace

const char* to_string(TemplateId id) {
    switch (id) {
        case TemplateId::Baseline: return "BASELINE";
        case TemplateId::V1Phrasing: return "V1";
        case TemplateId::V2Structure: return "V2";
        case TemplateId::V3Stripped: return "V3";
    }
    return "?";
}

TemplateId template_from_string(const std::string& s) {
    if (s == "BASELINE" || s == "baseline") return TemplateId::Baseline;
    if (s == "V1" || s == "v1") return TemplateId::V1Phrasing;
    if (s == "V2" || s == "v2") return TemplateId::V2Structure;
    if (s == "V3" || s == "v3") return TemplateId::V3Stripped;
    throw ConfigError("unknown template: '" + s + "'");
}

PromptTemplate PromptTemplate::get(TemplateId id) {
    PromptTemplate t;
    t.id = id;
    // Side-major order A_in, B_in, C_in, A_out, B_out, C_out except for the
    // alternating-structure variant.
    t.channel_order = {0, 1, 2, 3, 4, 5};
    switch (id) {
        case TemplateId::Baseline:
            for (int c : t.channel_order) t.header_texts.push_back(baseline_header(c % 3, c < 3));
            break;
        case TemplateId::V1Phrasing:
            for (int c : t.channel_order) t.header_texts.push_back(v1_header(c % 3, c < 3));
            break;
        case TemplateId::V2Structure:
            t.channel_order = {0, 3, 1, 4, 2, 5};
            for (int c : t.channel_order) t.header_texts.push_back(baseline_header(c % 3, c < 3));
            break;
        case TemplateId::V3Stripped:
            t.header_texts.push_back("Transformer Differential Relay's current measurement vectors are:");
            break;
    }
    return t;
}

sim::MeasurementWindow normalize(const sim::MeasurementWindow& window) {
    window.validate();
    double lo = window.values[0][0];
    double hi = lo;
    for (const auto& row : window.values)
        for (double v : row) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    sim::MeasurementWindow out = window;
    const double range = hi - lo;
    for (auto& row : out.values)
        for (double& v : row) v = range > 0 ? (v - lo) / range : 0.0;
    return out;
}

std::string format_value(double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("formatted value outside [0, 1]");
    // Round half away from zero on the decimal rendering. Going through the
    // correctly-rounded 6-decimal print avoids binary artifacts: the double
    // nearest 0.1235 is just below it, so floor(v * 1000 + 0.5) would give
    // 123 instead of the intended 124.
    char six[16];
    std::snprintf(six, sizeof(six), "%.6f", v);
    long mills = (six[2] - '0') * 100 + (six[3] - '0') * 10 + (six[4] - '0');
    if (six[0] == '1') mills += 1000;
    const int tail = (six[5] - '0') * 100 + (six[6] - '0') * 10 + (six[7] - '0');
    if (tail >= 500) ++mills;
    mills = std::min(mills, 1000L);
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%ld.%03ld", mills / 1000, mills % 1000);
    return buf;
}

PromptDocument render_prompt(const sim::MeasurementWindow& window, const PromptTemplate& tmpl) {
    PromptDocument doc;
    doc.template_id = tmpl.id;
    doc.scenario_id = window.scenario_id;
    doc.label = window.label;
    doc.value_spans.reserve(sim::kWindowSamples * sim::kChannels);

    std::string& out = doc.text;
    const bool stripped = tmpl.id == TemplateId::V3Stripped;
    if (stripped) {
        out += tmpl.header_texts[0];
        out += '\n';
    }
    for (int v = 0; v < sim::kChannels; ++v) {
        const int channel = tmpl.channel_order[v];
        if (!stripped) out += tmpl.header_texts[static_cast<size_t>(v)];
        out += '[';
        for (int t = 0; t < sim::kWindowSamples; ++t) {
            if (t > 0) out += ", ";
            const std::string formatted = format_value(window.values[t][channel]);
            ValueSpan span;
            span.char_start = static_cast<uint32_t>(out.size());
            out += formatted;
            span.char_end = static_cast<uint32_t>(out.size());
            span.time_index = static_cast<uint16_t>(t);
            span.channel_index = static_cast<uint16_t>(channel);
            doc.value_spans.push_back(span);
        }
        out += ']';
        if (stripped) out += ';';
        if (v + 1 < sim::kChannels) out += '\n';
    }
    return doc;
}

std::vector<std::optional<std::pair<uint16_t, uint16_t>>>
align_tokens_to_cells(const TokenizedSample& sample, const PromptDocument& doc) {
    if (sample.token_offsets.size() != sample.token_ids.size())
        throw DataError("token offsets out of sync with ids");
    std::vector<std::optional<std::pair<uint16_t, uint16_t>>> map(sample.token_ids.size());

    // Spans are ordered by char_start; binary search per token.
    const auto& spans = doc.value_spans;
    for (size_t i = 0; i < sample.token_offsets.size(); ++i) {
        const auto [tok_start, tok_end] = sample.token_offsets[i];
        if (tok_end <= tok_start) continue; // specials and padding
        auto it = std::upper_bound(spans.begin(), spans.end(), tok_start,
                                   [](uint32_t pos, const ValueSpan& s) { return pos < s.char_end; });
        int overlaps = 0;
        std::pair<uint16_t, uint16_t> cell{0, 0};
        for (; it != spans.end() && it->char_start < tok_end; ++it) {
            ++overlaps;
            cell = {it->time_index, it->channel_index};
        }
        if (overlaps == 1) map[i] = cell;
    }
    return map;
}

} // namespace tcdr::text
