#pragma once

#include "tcdrguard/common.hpp"
#include "tcdrguard/tensor.hpp"
#include "tcdrguard/textualize.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tcdr::model {

// Compact bidirectional (or causal, for the gpt2-style variant) transformer
// encoder with a two-way classification head. Pre-LN blocks; CLS pooling
// for the bidirectional flavor, last-token pooling for the causal one.
struct EncoderConfig {
    int vocab_size = 0;
    int hidden = 64;
    int layers = 2;
    int heads = 4;
    int ffn = 256;
    int max_len = 512;
    float dropout = 0.1f;
    bool causal = false;

    int head_dim() const { return hidden / heads; }
    void validate() const;
    uint64_t fingerprint() const;
};

struct LoraConfig {
    int rank = 8;
    float alpha = 32.0f;
    float adapter_dropout = 0.05f;
    bool frozen_base = true;
};

// One trainable tensor plus its Adam state.
struct Param {
    std::string name;
    Mat w;
    Mat grad;
    Mat m_state;
    Mat v_state;
    bool trainable = true;

    Param(std::string n, int rows, int cols, bool train = true)
        : name(std::move(n)), w(rows, cols), grad(rows, cols), m_state(rows, cols),
          v_state(rows, cols), trainable(train) {}
};

struct LayerWeights {
    Param ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Param ln2_g, ln2_b, w1, b1, w2, b2;
    // LoRA adapters on the query/value projections; absent unless enabled.
    std::unique_ptr<Param> lora_qa, lora_qb, lora_va, lora_vb;

    LayerWeights(int hidden, int ffn, int idx);
};

// Token batch after padding: ids/mask are [batch x seq] row-major.
struct Batch {
    int batch = 0;
    int seq = 0;
    std::vector<int32_t> ids;
    std::vector<uint8_t> mask; // 1 = real token
    std::vector<int32_t> labels;
    std::vector<int32_t> last_index; // last real token per row (causal pooling)
};

Batch make_batch(const std::vector<const text::TokenizedSample*>& samples, int max_len);

// Per-layer, per-head attention probabilities captured during a forward
// pass: probs[layer][head] is seq x seq, row-stochastic.
struct AttentionCapture {
    std::vector<std::vector<Mat>> probs;
};

class Encoder {
public:
    explicit Encoder(const EncoderConfig& cfg, uint64_t init_seed = 1);
    ~Encoder();

    const EncoderConfig& config() const { return cfg_; }

    // All parameters, classifier head included.
    std::vector<Param*> parameters();
    std::vector<const Param*> parameters() const;
    // Parameters updated by the optimizer (honors LoRA freezing).
    std::vector<Param*> trainable_parameters();

    void enable_lora(const LoraConfig& cfg, uint64_t seed);
    bool lora_enabled() const { return lora_.has_value(); }
    const std::optional<LoraConfig>& lora() const { return lora_; }

    size_t parameter_count(bool trainable_only = false) const;

    // Classifier forward. logits is [batch x 2]. When `train` is true,
    // dropout applies (seeded per step) and the activation cache for
    // backward() is retained.
    void forward(const Batch& batch, Mat& logits, bool train, uint64_t dropout_seed = 0,
                 AttentionCapture* capture = nullptr);

    // Backpropagate from dlogits [batch x 2]; accumulates into Param::grad.
    void backward(const Batch& batch, const Mat& dlogits);

    // Masked-token prediction forward/backward over the cached batch:
    // returns mean cross-entropy over `positions` (flat batch*seq indices)
    // predicting `targets`, and accumulates gradients when train is true.
    float mlm_step(const Batch& batch, const std::vector<int>& positions,
                   const std::vector<int32_t>& targets, bool train, uint64_t dropout_seed);

    void zero_grads();

    // Weight (de)serialization, Adam state excluded.
    std::map<std::string, Mat> export_weights() const;
    void import_weights(const std::map<std::string, Mat>& weights);
    uint64_t weights_fingerprint() const;

private:
    struct Cache;
    EncoderConfig cfg_;
    std::optional<LoraConfig> lora_;

    Param tok_emb_, pos_emb_, emb_ln_g_, emb_ln_b_;
    std::vector<LayerWeights> layers_;
    Param final_ln_g_, final_ln_b_;
    Param pre_head_w_, pre_head_b_, head_w_, head_b_;
    Param mlm_w_, mlm_b_; // masked-token prediction head (pretraining only)

    std::unique_ptr<Cache> cache_;

    void encode(const Batch& batch, bool train, uint64_t dropout_seed,
                AttentionCapture* capture);
    // Backpropagate dx (gradient at the last block's output, before the
    // final LN) down through the blocks and embeddings.
    void backward_through_stack(const Batch& batch, Mat dx);
};

} // namespace tcdr::model
