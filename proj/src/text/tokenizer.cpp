#include "tcdrguard/textualize.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>

namespace tcdr::text {

namespace {

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

} // namespace

Tokenizer Tokenizer::from_vocab(std::vector<std::string> vocab, int max_tokens) {
    if (vocab.size() < 5 || vocab[0] != "[PAD]" || vocab[1] != "[UNK]" || vocab[2] != "[CLS]" ||
        vocab[3] != "[SEP]" || vocab[4] != "[MASK]")
        throw DataError("vocabulary must start with [PAD] [UNK] [CLS] [SEP] [MASK]");
    Tokenizer t;
    t.vocab_ = std::move(vocab);
    t.max_tokens_ = max_tokens;
    for (size_t i = 0; i < t.vocab_.size(); ++i) {
        const auto [it, inserted] = t.lookup_.emplace(t.vocab_[i], static_cast<int32_t>(i));
        if (!inserted) throw DataError("duplicate vocabulary entry: '" + t.vocab_[i] + "'");
    }
    uint64_t h = fnv1a64_str("wordpiece-uncased-v1");
    h = fnv1a64(&t.max_tokens_, sizeof(t.max_tokens_), h);
    for (const auto& piece : t.vocab_) {
        h = fnv1a64_str(piece, h);
        h = fnv1a64_str("\n", h);
    }
    t.contract_id_ = h;
    return t;
}

Tokenizer Tokenizer::reference() {
    std::vector<std::string> vocab = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    auto add_both = [&vocab](const std::string& piece) {
        vocab.push_back(piece);
        vocab.push_back("##" + piece);
    };
    // Words from all prompt templates, lowercased.
    for (const char* w :
         {"transformer", "differential", "relay", "current", "measurement", "measurements",
          "vector", "vectors", "of", "phase", "a", "b", "c", "on", "in", "at", "input",
          "output", "side", "are", "s", "the"})
        add_both(w);
    for (const char* p : {"[", "]", ",", ";", ":", "'", ".", "(", ")", "-", "_"})
        add_both(p);
    for (char d = '0'; d <= '9'; ++d) add_both(std::string(1, d));
    // All three-decimal numerals in [0, 1]; fixed-width formatting keeps the
    // numeric vocabulary closed.
    for (int m = 0; m <= 1000; ++m) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%d.%03d", m / 1000, m % 1000);
        add_both(buf);
    }
    return from_vocab(std::move(vocab), 512);
}

void Tokenizer::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "# wordpiece-uncased-v1 max_tokens=" << max_tokens_ << "\n";
    for (const auto& piece : vocab_) out << piece << "\n";
    if (!out) throw DataError("write failed for '" + path + "'");
}

Tokenizer Tokenizer::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tokenizer vocabulary '" + path + "'");
    std::string header;
    std::getline(in, header);
    int max_tokens = 512;
    const auto pos = header.find("max_tokens=");
    if (pos != std::string::npos) max_tokens = std::stoi(header.substr(pos + 11));
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) vocab.push_back(line);
    return from_vocab(std::move(vocab), max_tokens);
}

TokenizedSample Tokenizer::tokenize(const PromptDocument& doc) const {
    TokenizedSample sample;
    sample.label = doc.label;
    sample.scenario_id = doc.scenario_id;
    sample.contract_id = contract_id_;
    sample.token_ids.push_back(kCls);
    sample.token_offsets.emplace_back(0, 0);

    const std::string lowered = to_lower(doc.text);
    const size_t n = lowered.size();
    size_t i = 0;
    while (i < n) {
        if (std::isspace(static_cast<unsigned char>(lowered[i]))) {
            ++i;
            continue;
        }
        size_t word_end = i;
        while (word_end < n && !std::isspace(static_cast<unsigned char>(lowered[word_end])))
            ++word_end;

        // Greedy longest match; continuations carry the ## prefix.
        size_t pos = i;
        std::vector<std::pair<int32_t, std::pair<uint32_t, uint32_t>>> pieces;
        bool ok = true;
        while (pos < word_end) {
            const bool first = pos == i;
            int32_t match = -1;
            size_t match_len = 0;
            for (size_t len = word_end - pos; len >= 1; --len) {
                std::string candidate = first ? lowered.substr(pos, len)
                                              : "##" + lowered.substr(pos, len);
                const auto it = lookup_.find(candidate);
                if (it != lookup_.end()) {
                    match = it->second;
                    match_len = len;
                    break;
                }
            }
            if (match < 0) {
                ok = false;
                break;
            }
            pieces.push_back({match, {static_cast<uint32_t>(pos),
                                      static_cast<uint32_t>(pos + match_len)}});
            pos += match_len;
        }
        if (ok) {
            for (const auto& [id, span] : pieces) {
                sample.token_ids.push_back(id);
                sample.token_offsets.push_back(span);
            }
        } else {
            sample.token_ids.push_back(kUnk);
            sample.token_offsets.emplace_back(static_cast<uint32_t>(i),
                                              static_cast<uint32_t>(word_end));
        }
        i = word_end;
    }

    sample.token_ids.push_back(kSep);
    sample.token_offsets.emplace_back(0, 0);
    sample.attention_mask.assign(sample.token_ids.size(), true);
    sample.over_budget = sample.token_ids.size() > static_cast<size_t>(max_tokens_);
    return sample;
}

} // namespace tcdr::text
