#pragma once

#include "tcdrguard/encoder.hpp"
#include "tcdrguard/textualize.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tcdr::model {

struct TrainConfig {
    int epochs = 10;
    double learning_rate = 2e-5;
    int batch_size = 16;
    double weight_decay = 0.01;
    int logging_steps = 10;
    uint64_t seed = 42;
    double val_fraction = 0.1; // carved from train when no val set is given

    void validate() const;
    uint64_t fingerprint() const;
};

struct PretrainConfig {
    int steps = 300;
    int batch_size = 16;
    double learning_rate = 3e-4;
    double mask_prob = 0.15;
    uint64_t seed = 7;
};

// Pretrained encoder + tokenizer contract, stored as a directory:
// asset.json, weights.safetensors, vocab.txt.
struct EncoderAsset {
    EncoderConfig config;
    std::map<std::string, Mat> weights;
    text::Tokenizer tokenizer = text::Tokenizer::reference();
    std::string asset_id;

    static EncoderAsset create(const EncoderConfig& cfg, const text::Tokenizer& tokenizer,
                               uint64_t init_seed);
    void save(const std::string& dir) const;
    static EncoderAsset load(const std::string& dir);
    void refresh_id();
};

// Masked-token pretraining over an unlabeled prompt corpus; updates the
// asset weights in place and returns the per-logging-step loss curve.
std::vector<std::pair<int, float>> pretrain_mlm(EncoderAsset& asset,
                                                const std::vector<text::TokenizedSample>& corpus,
                                                const PretrainConfig& cfg);

struct TrainLogRow {
    int step = 0;
    int epoch = 0;
    float loss = 0.0f;
    float val_metric = -1.0f; // macro F1, logged on epoch boundaries
};

struct Prediction {
    Label label = Label::Fault;
    double prob_attack = 0.0;
};

struct ModelBundle {
    std::string encoder_asset_id;
    uint64_t tokenizer_contract_id = 0;
    uint64_t train_config_fingerprint = 0;
    std::optional<LoraConfig> lora;
    double val_metric = 0.0;
    int best_epoch = -1;
    bool nondeterministic = false; // single-threaded path is deterministic
    std::vector<TrainLogRow> training_log;
    std::shared_ptr<Encoder> encoder;

    Prediction predict(const text::TokenizedSample& sample) const;
    std::vector<Prediction> predict_batch(
        const std::vector<const text::TokenizedSample*>& samples) const;

    void save(const std::string& dir) const;
    static ModelBundle load(const std::string& dir);
};

ModelBundle fine_tune(const EncoderAsset& asset, const std::vector<text::TokenizedSample>& train,
                      const std::vector<text::TokenizedSample>& val, const TrainConfig& cfg);

ModelBundle fine_tune_lora(const EncoderAsset& asset,
                           const std::vector<text::TokenizedSample>& train,
                           const std::vector<text::TokenizedSample>& val, const TrainConfig& cfg,
                           const LoraConfig& lora);

// AdamW over the encoder's trainable parameters.
class AdamW {
public:
    AdamW(double lr, double weight_decay) : lr_(lr), wd_(weight_decay) {}
    void step(std::vector<Param*>& params);
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_;
    double wd_;
    int64_t t_ = 0;
};

} // namespace tcdr::model
