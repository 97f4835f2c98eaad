#include "tcdrguard/model.hpp"

#include "tcdrguard/rng.hpp"
#include "tcdrguard/safetensors.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace tcdr::model {

namespace {

namespace fs = std::filesystem;

void softmax2(float a, float b, double& pa, double& pb) {
    const double m = std::max(a, b);
    const double ea = std::exp(static_cast<double>(a) - m);
    const double eb = std::exp(static_cast<double>(b) - m);
    pa = ea / (ea + eb);
    pb = eb / (ea + eb);
}

// Macro F1 over binary predictions; the checkpoint-selection metric.
double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred) {
    double f1_sum = 0;
    for (int cls = 0; cls < 2; ++cls) {
        int tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < truth.size(); ++i) {
            const bool t = truth[i] == cls, p = pred[i] == cls;
            tp += t && p;
            fp += !t && p;
            fn += t && !p;
        }
        const double prec = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double rec = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        f1_sum += prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    return f1_sum / 2.0;
}

double eval_macro_f1(Encoder& enc, const std::vector<text::TokenizedSample>& val,
                     int batch_size) {
    std::vector<int> truth, pred;
    Mat logits;
    for (size_t i = 0; i < val.size(); i += batch_size) {
        std::vector<const text::TokenizedSample*> chunk;
        for (size_t j = i; j < std::min(val.size(), i + batch_size); ++j)
            chunk.push_back(&val[j]);
        const Batch batch = make_batch(chunk, enc.config().max_len);
        enc.forward(batch, logits, /*train=*/false);
        for (int r = 0; r < batch.batch; ++r) {
            truth.push_back(batch.labels[r]);
            pred.push_back(logits.at(r, 1) >= logits.at(r, 0) ? 1 : 0);
        }
    }
    return macro_f1(truth, pred);
}

struct ClassPresence {
    bool fault = false;
    bool attack = false;
};

ClassPresence presence(const std::vector<text::TokenizedSample>& samples) {
    ClassPresence p;
    for (const auto& s : samples) (s.label == Label::Fault ? p.fault : p.attack) = true;
    return p;
}

ModelBundle run_training(const EncoderAsset& asset, std::vector<text::TokenizedSample> train,
                         std::vector<text::TokenizedSample> val, const TrainConfig& cfg,
                         const std::optional<LoraConfig>& lora) {
    cfg.validate();
    if (train.empty()) throw DataError("training set is empty");
    for (const auto& s : train)
        if (s.contract_id != asset.tokenizer.contract_id())
            throw DataError("training sample tokenized under a different tokenizer contract");
    const auto train_presence = presence(train);
    if (!train_presence.fault || !train_presence.attack)
        throw DataError("training set must contain both classes");

    // No validation set supplied: carve a stratified slice from train.
    if (val.empty()) {
        Rng rng(derive_seed(cfg.seed, 0x7a1));
        std::vector<size_t> fault_idx, attack_idx;
        for (size_t i = 0; i < train.size(); ++i)
            (train[i].label == Label::Fault ? fault_idx : attack_idx).push_back(i);
        rng.shuffle(fault_idx);
        rng.shuffle(attack_idx);
        std::vector<bool> to_val(train.size(), false);
        const auto take = [&](std::vector<size_t>& idx) {
            const size_t n = std::max<size_t>(1, static_cast<size_t>(idx.size() * cfg.val_fraction));
            for (size_t i = 0; i < n && i < idx.size(); ++i) to_val[idx[i]] = true;
        };
        take(fault_idx);
        take(attack_idx);
        std::vector<text::TokenizedSample> new_train;
        for (size_t i = 0; i < train.size(); ++i)
            (to_val[i] ? val : new_train).push_back(std::move(train[i]));
        train = std::move(new_train);
    }

    auto encoder = std::make_shared<Encoder>(asset.config, /*init_seed=*/cfg.seed);
    encoder->import_weights(asset.weights);
    if (lora) encoder->enable_lora(*lora, derive_seed(cfg.seed, 0x10aa));

    ModelBundle bundle;
    bundle.encoder_asset_id = asset.asset_id;
    bundle.tokenizer_contract_id = asset.tokenizer.contract_id();
    bundle.train_config_fingerprint = cfg.fingerprint();
    bundle.lora = lora;
    bundle.encoder = encoder;

    AdamW opt(cfg.learning_rate, cfg.weight_decay);
    auto trainable = encoder->trainable_parameters();

    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::map<std::string, Mat> best_weights;
    double best_metric = -1.0;
    int step = 0;
    Mat logits;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 0xe90c + epoch));
        shuffle_rng.shuffle(order);
        double running_loss = 0;
        int running_count = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::vector<const text::TokenizedSample*> chunk;
            for (size_t j = start; j < std::min(order.size(), start + cfg.batch_size); ++j)
                chunk.push_back(&train[order[j]]);
            const Batch batch = make_batch(chunk, asset.config.max_len);

            encoder->zero_grads();
            encoder->forward(batch, logits, /*train=*/true,
                             derive_seed(cfg.seed, 0xd0 + static_cast<uint64_t>(step)));

            // Softmax cross-entropy on the two logits.
            Mat dlogits(batch.batch, 2);
            double loss = 0;
            for (int r = 0; r < batch.batch; ++r) {
                double p0, p1;
                softmax2(logits.at(r, 0), logits.at(r, 1), p0, p1);
                const int y = batch.labels[r];
                loss -= std::log(std::max(1e-12, y == 1 ? p1 : p0));
                dlogits.at(r, 0) = static_cast<float>((p0 - (y == 0 ? 1.0 : 0.0)) / batch.batch);
                dlogits.at(r, 1) = static_cast<float>((p1 - (y == 1 ? 1.0 : 0.0)) / batch.batch);
            }
            loss /= batch.batch;
            encoder->backward(batch, dlogits);
            opt.step(trainable);

            ++step;
            running_loss += loss;
            ++running_count;
            if (step % cfg.logging_steps == 0) {
                bundle.training_log.push_back(
                    {step, epoch, static_cast<float>(running_loss / running_count), -1.0f});
                running_loss = 0;
                running_count = 0;
            }
        }
        const double metric = eval_macro_f1(*encoder, val, cfg.batch_size);
        bundle.training_log.push_back({step, epoch, 0.0f, static_cast<float>(metric)});
        if (metric > best_metric) {
            best_metric = metric;
            best_weights = encoder->export_weights();
            bundle.best_epoch = epoch;
        }
    }
    encoder->import_weights(best_weights);
    bundle.val_metric = best_metric;
    return bundle;
}

} // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (learning_rate <= 0) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (weight_decay < 0) throw ConfigError("weight decay must be non-negative");
    if (val_fraction <= 0 || val_fraction >= 1)
        throw ConfigError("val_fraction must be in (0, 1)");
}

uint64_t TrainConfig::fingerprint() const {
    uint64_t h = fnv1a64_str("train-config-v1");
    h = fnv1a64(&epochs, sizeof(epochs), h);
    h = fnv1a64(&learning_rate, sizeof(learning_rate), h);
    h = fnv1a64(&batch_size, sizeof(batch_size), h);
    h = fnv1a64(&weight_decay, sizeof(weight_decay), h);
    h = fnv1a64(&logging_steps, sizeof(logging_steps), h);
    h = fnv1a64(&seed, sizeof(seed), h);
    h = fnv1a64(&val_fraction, sizeof(val_fraction), h);
    return h;
}

void AdamW::step(std::vector<Param*>& params) {
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (Param* p : params) {
        float* w = p->w.data();
        float* g = p->grad.data();
        float* m = p->m_state.data();
        float* v = p->v_state.data();
        for (size_t i = 0; i < p->w.size(); ++i) {
            m[i] = static_cast<float>(b1 * m[i] + (1 - b1) * g[i]);
            v[i] = static_cast<float>(b2 * v[i] + (1 - b2) * static_cast<double>(g[i]) * g[i]);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] = static_cast<float>(w[i] - lr_ * (mhat / (std::sqrt(vhat) + eps) + wd_ * w[i]));
        }
    }
}

ModelBundle fine_tune(const EncoderAsset& asset, const std::vector<text::TokenizedSample>& train,
                      const std::vector<text::TokenizedSample>& val, const TrainConfig& cfg) {
    return run_training(asset, train, val, cfg, std::nullopt);
}

ModelBundle fine_tune_lora(const EncoderAsset& asset,
                           const std::vector<text::TokenizedSample>& train,
                           const std::vector<text::TokenizedSample>& val, const TrainConfig& cfg,
                           const LoraConfig& lora) {
    return run_training(asset, train, val, cfg, lora);
}

Prediction ModelBundle::predict(const text::TokenizedSample& sample) const {
    return predict_batch({&sample})[0];
}

std::vector<Prediction> ModelBundle::predict_batch(
    const std::vector<const text::TokenizedSample*>& samples) const {
    if (!encoder) throw CapabilityError("bundle has no encoder loaded");
    for (const auto* s : samples)
        if (s->contract_id != tokenizer_contract_id)
            throw DataError("sample tokenizer contract does not match the bundle");
    const Batch batch = make_batch(samples, encoder->config().max_len);
    Mat logits;
    encoder->forward(batch, logits, /*train=*/false);
    std::vector<Prediction> out(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        double p0, p1;
        softmax2(logits.at(static_cast<int>(i), 0), logits.at(static_cast<int>(i), 1), p0, p1);
        out[i].prob_attack = p1;
        out[i].label = p1 >= 0.5 ? Label::Attack : Label::Fault;
    }
    return out;
}

// ---- persistence ----------------------------------------------------------

namespace {

nlohmann::json config_to_json(const EncoderConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"hidden", c.hidden}, {"layers", c.layers},
            {"heads", c.heads},           {"ffn", c.ffn},       {"max_len", c.max_len},
            {"dropout", c.dropout},       {"causal", c.causal}};
}

EncoderConfig config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.vocab_size = j.at("vocab_size");
    c.hidden = j.at("hidden");
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.ffn = j.at("ffn");
    c.max_len = j.at("max_len");
    c.dropout = j.at("dropout");
    c.causal = j.at("causal");
    return c;
}

} // namespace

EncoderAsset EncoderAsset::create(const EncoderConfig& cfg, const text::Tokenizer& tokenizer,
                                  uint64_t init_seed) {
    EncoderAsset asset;
    asset.config = cfg;
    asset.config.vocab_size = static_cast<int>(tokenizer.vocab_size());
    asset.tokenizer = tokenizer;
    Encoder enc(asset.config, init_seed);
    asset.weights = enc.export_weights();
    asset.refresh_id();
    return asset;
}

void EncoderAsset::refresh_id() {
    uint64_t h = config.fingerprint();
    for (const auto& [name, mat] : weights) {
        h = fnv1a64_str(name, h);
        h = fnv1a64(mat.data(), mat.size() * sizeof(float), h);
    }
    asset_id = hex64(h ^ tokenizer.contract_id());
}

void EncoderAsset::save(const std::string& dir) const {
    fs::create_directories(dir);
    nlohmann::json meta = {{"schema", 1},
                           {"asset_id", asset_id},
                           {"tokenizer_contract_id", hex64(tokenizer.contract_id())},
                           {"config", config_to_json(config)}};
    std::ofstream out(fs::path(dir) / "asset.json");
    out << meta.dump(2) << "\n";
    if (!out) throw DataError("cannot write asset metadata in '" + dir + "'");
    std::map<std::string, const Mat*> refs;
    for (const auto& [name, mat] : weights) refs.emplace(name, &mat);
    save_safetensors((fs::path(dir) / "weights.safetensors").string(), refs);
    tokenizer.save((fs::path(dir) / "vocab.txt").string());
}

EncoderAsset EncoderAsset::load(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "asset.json");
    if (!in) throw DataError("no encoder asset at '" + dir + "'");
    nlohmann::json meta = nlohmann::json::parse(in);
    EncoderAsset asset;
    asset.config = config_from_json(meta.at("config"));
    asset.tokenizer = text::Tokenizer::load((fs::path(dir) / "vocab.txt").string());
    asset.weights = load_safetensors((fs::path(dir) / "weights.safetensors").string());
    asset.refresh_id();
    const std::string stored = meta.at("asset_id");
    if (stored != asset.asset_id)
        throw DataError("asset content does not match its recorded id (corrupt asset?)");
    return asset;
}

void ModelBundle::save(const std::string& dir) const {
    fs::create_directories(dir);
    nlohmann::json meta = {
        {"schema", 1},
        {"encoder_asset_id", encoder_asset_id},
        {"tokenizer_contract_id", hex64(tokenizer_contract_id)},
        {"train_config_fingerprint", hex64(train_config_fingerprint)},
        {"val_metric", val_metric},
        {"best_epoch", best_epoch},
        {"nondeterministic", nondeterministic},
        {"label_map", {{"0", "FAULT"}, {"1", "ATTACK"}}},
        {"config", config_to_json(encoder->config())}};
    if (lora)
        meta["lora"] = {{"rank", lora->rank},
                        {"alpha", lora->alpha},
                        {"adapter_dropout", lora->adapter_dropout},
                        {"frozen_base", lora->frozen_base}};
    std::ofstream out(fs::path(dir) / "bundle.json");
    out << meta.dump(2) << "\n";
    if (!out) throw DataError("cannot write bundle metadata in '" + dir + "'");

    const auto weights = encoder->export_weights();
    std::map<std::string, const Mat*> refs;
    for (const auto& [name, mat] : weights) refs.emplace(name, &mat);
    save_safetensors((fs::path(dir) / "model.safetensors").string(), refs);

    std::ofstream log(fs::path(dir) / "training_log.csv");
    log << "step,epoch,loss,val_macro_f1\n";
    for (const auto& row : training_log)
        log << row.step << ',' << row.epoch << ',' << row.loss << ',' << row.val_metric << "\n";
}

ModelBundle ModelBundle::load(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "bundle.json");
    if (!in) throw DataError("no model bundle at '" + dir + "'");
    nlohmann::json meta = nlohmann::json::parse(in);
    ModelBundle bundle;
    bundle.encoder_asset_id = meta.at("encoder_asset_id");
    bundle.tokenizer_contract_id =
        std::stoull(meta.at("tokenizer_contract_id").get<std::string>(), nullptr, 16);
    bundle.train_config_fingerprint =
        std::stoull(meta.at("train_config_fingerprint").get<std::string>(), nullptr, 16);
    bundle.val_metric = meta.at("val_metric");
    bundle.best_epoch = meta.at("best_epoch");
    bundle.nondeterministic = meta.at("nondeterministic");
    const EncoderConfig cfg = config_from_json(meta.at("config"));
    bundle.encoder = std::make_shared<Encoder>(cfg);
    if (meta.contains("lora")) {
        LoraConfig lc;
        lc.rank = meta["lora"].at("rank");
        lc.alpha = meta["lora"].at("alpha");
        lc.adapter_dropout = meta["lora"].at("adapter_dropout");
        lc.frozen_base = meta["lora"].at("frozen_base");
        bundle.lora = lc;
        bundle.encoder->enable_lora(lc, 0);
    }
    bundle.encoder->import_weights(
        load_safetensors((fs::path(dir) / "model.safetensors").string()));
    return bundle;
}

// ---- pretraining ----------------------------------------------------------

std::vector<std::pair<int, float>> pretrain_mlm(EncoderAsset& asset,
                                                const std::vector<text::TokenizedSample>& corpus,
                                                const PretrainConfig& cfg) {
    if (corpus.empty()) throw DataError("pretraining corpus is empty");
    Encoder enc(asset.config, cfg.seed);
    enc.import_weights(asset.weights);
    AdamW opt(cfg.learning_rate, 0.01);
    auto trainable = enc.trainable_parameters();

    Rng rng(derive_seed(cfg.seed, 0x313));
    std::vector<std::pair<int, float>> curve;
    double running = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<const text::TokenizedSample*> chunk;
        for (int i = 0; i < cfg.batch_size; ++i)
            chunk.push_back(&corpus[rng.next_below(corpus.size())]);
        Batch batch = make_batch(chunk, asset.config.max_len);

        // BERT-style corruption: 15% of non-special tokens; 80% -> [MASK],
        // 10% -> random token, 10% unchanged.
        std::vector<int> positions;
        std::vector<int32_t> targets;
        for (int r = 0; r < batch.batch; ++r)
            for (int s2 = 0; s2 < batch.seq; ++s2) {
                const int flat = r * batch.seq + s2;
                if (!batch.mask[flat]) continue;
                if (batch.ids[flat] < 5) continue; // specials
                if (rng.next_double() >= cfg.mask_prob) continue;
                positions.push_back(flat);
                targets.push_back(batch.ids[flat]);
                const double roll = rng.next_double();
                if (roll < 0.8)
                    batch.ids[flat] = text::Tokenizer::kMask;
                else if (roll < 0.9)
                    batch.ids[flat] =
                        static_cast<int32_t>(5 + rng.next_below(asset.config.vocab_size - 5));
            }
        if (positions.empty()) continue;

        enc.zero_grads();
        const float loss = enc.mlm_step(batch, positions, targets, /*train=*/true,
                                        derive_seed(cfg.seed, 0x777 + step));
        opt.step(trainable);
        running += loss;
        if ((step + 1) % 10 == 0) {
            curve.push_back({step + 1, static_cast<float>(running / 10.0)});
            running = 0;
        }
    }
    asset.weights = enc.export_weights();
    asset.refresh_id();
    return curve;
}

} // namespace tcdr::model
