#pragma once

#include "tcdrguard/common.hpp"
#include "tcdrguard/sim.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tcdr::text {

enum class TemplateId : uint8_t { Baseline, V1Phrasing, V2Structure, V3Stripped };

const char* to_string(TemplateId id);
TemplateId template_from_string(const std::string& s);

struct PromptTemplate {
    TemplateId id = TemplateId::Baseline;
    // Channel indices (into the A_in..C_out order) in render sequence.
    std::array<int, sim::kChannels> channel_order{};
    // One header per rendered vector, or a single document header for the
    // stripped variant.
    std::vector<std::string> header_texts;

    static PromptTemplate get(TemplateId id);
};

struct ValueSpan {
    uint32_t char_start = 0;
    uint32_t char_end = 0; // exclusive
    uint16_t time_index = 0;
    uint16_t channel_index = 0;
};

struct PromptDocument {
    std::string text;
    TemplateId template_id = TemplateId::Baseline;
    std::vector<ValueSpan> value_spans; // exactly 192, ordered channel_order-major
    std::string scenario_id;
    Label label = Label::Fault;
};

struct TokenizedSample {
    std::vector<int32_t> token_ids;
    std::vector<std::pair<uint32_t, uint32_t>> token_offsets; // specials get (0,0)
    std::vector<bool> attention_mask;
    Label label = Label::Fault;
    uint64_t contract_id = 0;    // tokenizer contract fingerprint
    bool over_budget = false;    // > max_tokens before any policy applied
    std::string scenario_id;
};

// Uncased WordPiece-style tokenizer: whitespace pre-split, then greedy
// longest-match with "##" continuation pieces; unmatched words become
// [UNK]. Character offsets are tracked for measurement-domain alignment.
class Tokenizer {
public:
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kUnk = 1;
    static constexpr int32_t kCls = 2;
    static constexpr int32_t kSep = 3;
    static constexpr int32_t kMask = 4;

    // Reference vocabulary: template words, punctuation, digits, and the
    // 1001 three-decimal numerals 0.000..1.000 (plain and continuation).
    static Tokenizer reference();
    static Tokenizer from_vocab(std::vector<std::string> vocab, int max_tokens = 512);

    void save(const std::string& path) const;
    static Tokenizer load(const std::string& path);

    TokenizedSample tokenize(const PromptDocument& doc) const;

    int max_tokens() const { return max_tokens_; }
    size_t vocab_size() const { return vocab_.size(); }
    // Fingerprint over vocabulary and rules; the tokenizer contract id.
    uint64_t contract_id() const { return contract_id_; }
    const std::string& token_text(int32_t id) const { return vocab_.at(id); }

private:
    Tokenizer() = default;
    std::vector<std::string> vocab_;
    std::map<std::string, int32_t> lookup_;
    int max_tokens_ = 512;
    uint64_t contract_id_ = 0;
};

// Min-max normalization over all 192 values jointly; a constant window
// maps to all zeros.
sim::MeasurementWindow normalize(const sim::MeasurementWindow& window);

// Fixed-width "d.ddd", round half away from zero; input must be in [0, 1].
std::string format_value(double v);

PromptDocument render_prompt(const sim::MeasurementWindow& normalized_window,
                             const PromptTemplate& tmpl);

// token index -> (time, channel); tokens whose span overlaps no numeral, or
// more than one, map to nothing.
std::vector<std::optional<std::pair<uint16_t, uint16_t>>>
align_tokens_to_cells(const TokenizedSample& sample, const PromptDocument& doc);

} // namespace tcdr::text
