#include <doctest.h>

#include "tcdrguard/rng.hpp"
#include "tcdrguard/textualize.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

using namespace tcdr;
using namespace tcdr::text;

namespace {

sim::MeasurementWindow random_window(uint64_t seed, Label label = Label::Fault) {
    Rng rng(seed);
    sim::MeasurementWindow w;
    w.label = label;
    w.scenario_id = "w" + std::to_string(seed);
    w.trigger_index = 16;
    for (auto& row : w.values)
        for (double& v : row) v = rng.uniform(-10.0, 10.0);
    return w;
}

// Rounding oracle: decide the 3-decimal rendering from the decimal digit
// string itself (half away from zero), independent of the implementation.
std::string round_decimal_string(const std::string& digits) {
    // digits like "0.123450"; round at the third decimal.
    std::string head = digits.substr(0, 5); // "d.ddd"
    bool up = false;
    if (digits.size() > 5) {
        const std::string tail = digits.substr(5);
        const std::string half = "5" + std::string(tail.size() - 1, '0');
        up = tail >= half;
    }
    if (up) {
        int mills = (head[2] - '0') * 100 + (head[3] - '0') * 10 + (head[4] - '0') + 1;
        int whole = head[0] - '0';
        if (mills == 1000) {
            mills = 0;
            ++whole;
        }
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%d.%03d", whole, mills);
        return buf;
    }
    return head;
}

} // namespace

TEST_SUITE("textualize") {

TEST_CASE("normalize maps the window onto [0, 1] jointly") {
    sim::MeasurementWindow w = random_window(3);
    w.values[0][0] = 2.0;
    w.values[0][1] = 4.0;
    w.values[0][2] = 6.0;
    for (auto& row : w.values)
        for (double& v : row) v = std::clamp(v, 2.0, 6.0);
    const auto n = normalize(w);
    CHECK(n.values[0][0] == 0.0);
    CHECK(n.values[0][1] == 0.5);
    CHECK(n.values[0][2] == 1.0);
    double lo = 1e9, hi = -1e9;
    for (const auto& row : n.values)
        for (double v : row) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
}

TEST_CASE("constant window normalizes to zeros") {
    sim::MeasurementWindow w;
    for (auto& row : w.values) row.fill(3.7);
    const auto n = normalize(w);
    for (const auto& row : n.values)
        for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("format_value fixed cases") {
    CHECK(format_value(0.5) == "0.500");
    CHECK(format_value(1.0) == "1.000");
    CHECK(format_value(0.0) == "0.000");
    CHECK(format_value(0.12345) == "0.123");
    CHECK(format_value(0.1235) == "0.124");
    CHECK(format_value(0.0625) == "0.063"); // exact binary tie, away from zero
    CHECK_THROWS_AS(format_value(-0.001), DataError);
    CHECK_THROWS_AS(format_value(1.001), DataError);
}

TEST_CASE("format_value agrees with the digit-string rounding oracle") {
    Rng rng(11);
    for (int i = 0; i < 5000; ++i) {
        const double v = rng.next_double();
        char printed[32];
        std::snprintf(printed, sizeof(printed), "%.6f", v);
        CHECK(format_value(v) == round_decimal_string(printed));
    }
    // Boundary sweep around every representable half.
    for (int m = 0; m < 1000; ++m) {
        const double half = (m * 1000.0 + 500.0) / 1e6;
        for (double v : {half - 1e-9, half, half + 1e-9}) {
            char printed[32];
            std::snprintf(printed, sizeof(printed), "%.6f", v);
            CHECK(format_value(v) == round_decimal_string(printed));
        }
    }
}

TEST_CASE("baseline prompt first line matches the published template") {
    const auto w = normalize(random_window(5));
    const auto doc = render_prompt(w, PromptTemplate::get(TemplateId::Baseline));
    const std::string expected_prefix =
        "Transformer Differential Relay's current measurement vector of phase A on "
        "transformer input side: [";
    CHECK(doc.text.compare(0, expected_prefix.size(), expected_prefix) == 0);
    // Six lines; line four introduces the output side.
    CHECK(std::count(doc.text.begin(), doc.text.end(), '\n') == 5);
    CHECK(doc.text.find("vector of phase A on transformer output side:") != std::string::npos);
}

TEST_CASE("v1 phrasing uses the short header") {
    const auto w = normalize(random_window(6));
    const auto doc = render_prompt(w, PromptTemplate::get(TemplateId::V1Phrasing));
    const std::string expected =
        "Differential relay phase A current measurements at transformer input side: [";
    CHECK(doc.text.compare(0, expected.size(), expected) == 0);
}

TEST_CASE("v2 alternates input and output channels") {
    const auto tmpl = PromptTemplate::get(TemplateId::V2Structure);
    CHECK(tmpl.channel_order == std::array<int, 6>{0, 3, 1, 4, 2, 5});
    const auto w = normalize(random_window(7));
    const auto doc = render_prompt(w, tmpl);
    const auto a_out = doc.text.find("phase A on transformer output side");
    const auto b_in = doc.text.find("phase B on transformer input side");
    REQUIRE(a_out != std::string::npos);
    REQUIRE(b_in != std::string::npos);
    CHECK(a_out < b_in);
}

TEST_CASE("v3 strips phase and side identifiers") {
    const auto w = normalize(random_window(8));
    const auto doc = render_prompt(w, PromptTemplate::get(TemplateId::V3Stripped));
    CHECK(doc.text.find("phase A") == std::string::npos);
    CHECK(doc.text.find("phase B") == std::string::npos);
    CHECK(doc.text.find("phase C") == std::string::npos);
    CHECK(doc.text.find("input side") == std::string::npos);
    CHECK(doc.text.find("output side") == std::string::npos);
    CHECK(doc.text.find("measurement vectors are:") != std::string::npos);
}

TEST_CASE("value spans cover exactly 192 disjoint fixed-width numerals") {
    for (auto id : {TemplateId::Baseline, TemplateId::V1Phrasing, TemplateId::V2Structure,
                    TemplateId::V3Stripped}) {
        const auto w = normalize(random_window(9));
        const auto doc = render_prompt(w, PromptTemplate::get(id));
        REQUIRE(doc.value_spans.size() == 192);
        uint32_t prev_end = 0;
        for (const auto& s : doc.value_spans) {
            CHECK(s.char_end - s.char_start == 5);
            CHECK(s.char_start >= prev_end);
            prev_end = s.char_end;
        }
    }
}

TEST_CASE("rendered numerals round-trip through re-parsing") {
    const auto w = normalize(random_window(10));
    for (auto id : {TemplateId::Baseline, TemplateId::V3Stripped}) {
        const auto doc = render_prompt(w, PromptTemplate::get(id));
        for (const auto& s : doc.value_spans) {
            const std::string numeral = doc.text.substr(s.char_start, s.char_end - s.char_start);
            CHECK(numeral == format_value(w.values[s.time_index][s.channel_index]));
        }
    }
}

TEST_CASE("all templates render the same multiset of numerals") {
    const auto w = normalize(random_window(12));
    std::map<std::string, int> reference;
    bool first = true;
    for (auto id : {TemplateId::Baseline, TemplateId::V1Phrasing, TemplateId::V2Structure,
                    TemplateId::V3Stripped}) {
        const auto doc = render_prompt(w, PromptTemplate::get(id));
        std::map<std::string, int> counts;
        for (const auto& s : doc.value_spans)
            ++counts[doc.text.substr(s.char_start, s.char_end - s.char_start)];
        if (first) {
            reference = counts;
            first = false;
        } else {
            CHECK(counts == reference);
        }
    }
}

TEST_CASE("distinct formatted windows render distinct texts") {
    auto w1 = normalize(random_window(14));
    auto w2 = w1;
    w2.values[17][3] = w2.values[17][3] > 0.5 ? 0.0 : 1.0;
    const auto tmpl = PromptTemplate::get(TemplateId::Baseline);
    CHECK(render_prompt(w1, tmpl).text != render_prompt(w2, tmpl).text);
}

TEST_CASE("reference tokenizer stays within the 512-token budget") {
    const auto tok = Tokenizer::reference();
    for (auto id : {TemplateId::Baseline, TemplateId::V1Phrasing, TemplateId::V2Structure,
                    TemplateId::V3Stripped}) {
        const auto w = normalize(random_window(15));
        const auto doc = render_prompt(w, PromptTemplate::get(id));
        const auto sample = tok.tokenize(doc);
        CHECK_FALSE(sample.over_budget);
        CHECK(sample.token_ids.size() <= 512);
        CHECK(sample.token_ids.front() == Tokenizer::kCls);
        CHECK(sample.token_ids.back() == Tokenizer::kSep);
        // No lexical gaps: the closed vocabulary covers every rendered piece.
        for (int32_t id2 : sample.token_ids) CHECK(id2 != Tokenizer::kUnk);
    }
}

TEST_CASE("tokenizer offsets are monotone and deterministic") {
    const auto tok = Tokenizer::reference();
    const auto doc = render_prompt(normalize(random_window(16)),
                                   PromptTemplate::get(TemplateId::Baseline));
    const auto a = tok.tokenize(doc);
    const auto b = tok.tokenize(doc);
    CHECK(a.token_ids == b.token_ids);
    uint32_t prev = 0;
    for (const auto& [s, e] : a.token_offsets) {
        if (e == 0) continue; // specials
        CHECK(s >= prev);
        prev = s;
    }
}

TEST_CASE("empty document tokenizes to the two specials") {
    const auto tok = Tokenizer::reference();
    PromptDocument doc;
    const auto sample = tok.tokenize(doc);
    REQUIRE(sample.token_ids.size() == 2);
    CHECK(sample.token_ids[0] == Tokenizer::kCls);
    CHECK(sample.token_ids[1] == Tokenizer::kSep);
}

TEST_CASE("alignment maps numeral tokens to their cells") {
    const auto tok = Tokenizer::reference();
    const auto doc = render_prompt(normalize(random_window(17)),
                                   PromptTemplate::get(TemplateId::Baseline));
    const auto sample = tok.tokenize(doc);
    const auto map = align_tokens_to_cells(sample, doc);

    // The third numeral of the first rendered channel lives at (2, 0).
    const auto& span = doc.value_spans[2];
    bool found = false;
    for (size_t i = 0; i < sample.token_ids.size(); ++i) {
        const auto [s, e] = sample.token_offsets[i];
        if (s == span.char_start && e == span.char_end) {
            REQUIRE(map[i].has_value());
            CHECK(map[i]->first == 2);
            CHECK(map[i]->second == 0);
            found = true;
        }
    }
    CHECK(found);

    // Header tokens map to nothing; every cell is covered at least once.
    CHECK_FALSE(map[1].has_value()); // first token after [CLS] is "transformer"
    std::set<std::pair<uint16_t, uint16_t>> covered;
    for (const auto& cell : map)
        if (cell) covered.insert(*cell);
    CHECK(covered.size() == 192);
}

TEST_CASE("tokenizer vocabulary round-trips through save and load") {
    const auto tok = Tokenizer::reference();
    const auto path = std::filesystem::temp_directory_path() / "tcdr_vocab_test.txt";
    tok.save(path.string());
    const auto loaded = Tokenizer::load(path.string());
    CHECK(loaded.contract_id() == tok.contract_id());
    CHECK(loaded.vocab_size() == tok.vocab_size());
    std::filesystem::remove(path);
}

} // TEST_SUITE
