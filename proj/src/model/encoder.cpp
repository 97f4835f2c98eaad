#include "tcdrguard/encoder.hpp"

#include "tcdrguard/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tcdr::model {

namespace {

constexpr float kMaskBias = -1e30f;
constexpr float kGeluC = 0.7978845608028654f; // sqrt(2/pi)

void fill_normal(Mat& m, Rng& rng, double stddev) {
    for (auto& v : m.d) v = static_cast<float>(rng.gaussian() * stddev);
}

// y = gelu(x), tanh approximation; also emits t = tanh(z) for backward.
void gelu_forward(const Mat& x, Mat& y, Mat& t) {
    const size_t n = x.size();
    y.rows = t.rows = x.rows;
    y.cols = t.cols = x.cols;
    y.d.resize(n);
    t.d.resize(n);
    std::vector<float> z(n);
    for (size_t i = 0; i < n; ++i) {
        const float xi = x.d[i];
        float zi = kGeluC * (xi + 0.044715f * xi * xi * xi);
        z[i] = std::clamp(2.0f * zi, -30.0f, 30.0f);
    }
    kern::exp_f32(z.data(), t.d.data(), n); // t holds exp(2z)
    for (size_t i = 0; i < n; ++i) {
        const float e = t.d[i];
        const float tanh_z = (e - 1.0f) / (e + 1.0f);
        t.d[i] = tanh_z;
        y.d[i] = 0.5f * x.d[i] * (1.0f + tanh_z);
    }
}

void gelu_backward(const Mat& x, const Mat& t, const Mat& dy, Mat& dx) {
    const size_t n = x.size();
    dx.rows = x.rows;
    dx.cols = x.cols;
    dx.d.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const float xi = x.d[i];
        const float ti = t.d[i];
        const float dz = kGeluC * (1.0f + 3.0f * 0.044715f * xi * xi);
        const float grad = 0.5f * (1.0f + ti) + 0.5f * xi * (1.0f - ti * ti) * dz;
        dx.d[i] = dy.d[i] * grad;
    }
}

struct LnCache {
    std::vector<float> mean;
    std::vector<float> rstd;
};

void layernorm_forward(const Mat& x, const Param& g, const Param& b, Mat& y, LnCache& cache) {
    const int H = x.cols;
    y.rows = x.rows;
    y.cols = H;
    y.d.resize(x.size());
    cache.mean.resize(x.rows);
    cache.rstd.resize(x.rows);
    for (int r = 0; r < x.rows; ++r) {
        const float* xr = x.row(r);
        float mu = 0;
        for (int c = 0; c < H; ++c) mu += xr[c];
        mu /= H;
        float var = 0;
        for (int c = 0; c < H; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= H;
        const float rstd = 1.0f / std::sqrt(var + 1e-5f);
        cache.mean[r] = mu;
        cache.rstd[r] = rstd;
        float* yr = y.row(r);
        for (int c = 0; c < H; ++c)
            yr[c] = (xr[c] - mu) * rstd * g.w.d[c] + b.w.d[c];
    }
}

void layernorm_backward(const Mat& x, const Param& g, const LnCache& cache, const Mat& dy,
                        Mat& dx, Param& dg_holder, Param& db_holder) {
    const int H = x.cols;
    dx.rows = x.rows;
    dx.cols = H;
    dx.d.resize(x.size());
    float* dg = dg_holder.grad.data();
    float* db = db_holder.grad.data();
    for (int r = 0; r < x.rows; ++r) {
        const float* xr = x.row(r);
        const float* dyr = dy.row(r);
        float* dxr = dx.row(r);
        const float mu = cache.mean[r];
        const float rstd = cache.rstd[r];
        float sum_dyg = 0, sum_dyg_xhat = 0;
        for (int c = 0; c < H; ++c) {
            const float xhat = (xr[c] - mu) * rstd;
            const float dyg = dyr[c] * g.w.d[c];
            sum_dyg += dyg;
            sum_dyg_xhat += dyg * xhat;
            dg[c] += dyr[c] * xhat;
            db[c] += dyr[c];
        }
        const float inv_h = 1.0f / H;
        for (int c = 0; c < H; ++c) {
            const float xhat = (xr[c] - mu) * rstd;
            const float dyg = dyr[c] * g.w.d[c];
            dxr[c] = rstd * (dyg - inv_h * sum_dyg - xhat * inv_h * sum_dyg_xhat);
        }
    }
}

// Inverted dropout mask with values in {0,ure 1/(1-p)}.
void make_dropout_mask(Mat& mask, int rows, int cols, float p, Rng& rng) {
    mask.rows = rows;
    mask.cols = cols;
    mask.d.resize(static_cast<size_t>(rows) * cols);
    const float keep_scale = 1.0f / (1.0f - p);
    for (auto& v : mask.d) v = rng.next_double() >= p ? keep_scale : 0.0f;
}

void apply_mask(Mat& x, const Mat& mask) {
    for (size_t i = 0; i < x.size(); ++i) x.d[i] *= mask.d[i];
}

} // namespace

void EncoderConfig::validate() const {
    if (vocab_size <= 0) throw ConfigError("encoder vocab_size must be positive");
    if (hidden <= 0 || heads <= 0 || hidden % heads != 0)
        throw ConfigError("hidden size must be a positive multiple of heads");
    if (layers <= 0 || ffn <= 0 || max_len <= 0)
        throw ConfigError("layers, ffn and max_len must be positive");
    if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must be in [0, 1)");
}

uint64_t EncoderConfig::fingerprint() const {
    uint64_t h = fnv1a64_str("encoder-config-v1");
    const int32_t fields[6] = {vocab_size, hidden, layers, heads, ffn, max_len};
    h = fnv1a64(fields, sizeof(fields), h);
    h = fnv1a64(&dropout, sizeof(dropout), h);
    const uint8_t c = causal ? 1 : 0;
    return fnv1a64(&c, 1, h);
}

LayerWeights::LayerWeights(int hidden, int ffn, int idx)
    : ln1_g("layer" + std::to_string(idx) + ".ln1.g", 1, hidden),
      ln1_b("layer" + std::to_string(idx) + ".ln1.b", 1, hidden),
      wq("layer" + std::to_string(idx) + ".wq", hidden, hidden),
      bq("layer" + std::to_string(idx) + ".bq", 1, hidden),
      wk("layer" + std::to_string(idx) + ".wk", hidden, hidden),
      bk("layer" + std::to_string(idx) + ".bk", 1, hidden),
      wv("layer" + std::to_string(idx) + ".wv", hidden, hidden),
      bv("layer" + std::to_string(idx) + ".bv", 1, hidden),
      wo("layer" + std::to_string(idx) + ".wo", hidden, hidden),
      bo("layer" + std::to_string(idx) + ".bo", 1, hidden),
      ln2_g("layer" + std::to_string(idx) + ".ln2.g", 1, hidden),
      ln2_b("layer" + std::to_string(idx) + ".ln2.b", 1, hidden),
      w1("layer" + std::to_string(idx) + ".w1", hidden, ffn),
      b1("layer" + std::to_string(idx) + ".b1", 1, ffn),
      w2("layer" + std::to_string(idx) + ".w2", ffn, hidden),
      b2("layer" + std::to_string(idx) + ".b2", 1, hidden) {}

Batch make_batch(const std::vector<const text::TokenizedSample*>& samples, int max_len) {
    Batch b;
    b.batch = static_cast<int>(samples.size());
    int seq = 0;
    for (const auto* s : samples)
        seq = std::max(seq, static_cast<int>(s->token_ids.size()));
    if (seq > max_len)
        throw DataError("sample exceeds the encoder length budget (" + std::to_string(seq) +
                        " > " + std::to_string(max_len) + ")");
    b.seq = seq;
    b.ids.assign(static_cast<size_t>(b.batch) * seq, 0); // 0 = [PAD]
    b.mask.assign(static_cast<size_t>(b.batch) * seq, 0);
    b.labels.resize(b.batch);
    b.last_index.resize(b.batch);
    for (int i = 0; i < b.batch; ++i) {
        const auto& ids = samples[i]->token_ids;
        for (size_t j = 0; j < ids.size(); ++j) {
            b.ids[i * seq + j] = ids[j];
            b.mask[i * seq + j] = 1;
        }
        b.labels[i] = static_cast<int32_t>(samples[i]->label);
        b.last_index[i] = static_cast<int32_t>(ids.size()) - 1;
    }
    return b;
}

// ---- cache --------------------------------------------------------------

struct Encoder::Cache {
    int B = 0, S = 0;
    Batch batch;
    bool train = false;

    Mat emb_sum;
    LnCache emb_ln;
    Mat x0;
    Mat emb_drop;

    struct Layer {
        Mat x_in;
        LnCache ln1;
        Mat ln1_out;
        Mat q, k, v;
        std::vector<Mat> probs; // B*heads entries, each S x S
        Mat ctx;
        Mat attn_drop;
        Mat x_mid;
        LnCache ln2;
        Mat ln2_out;
        Mat ffn_pre;
        Mat ffn_tanh;
        Mat ffn_act;
        Mat ffn_drop;
        Mat lora_q_in, lora_v_in; // adapter inputs after adapter dropout
        Mat lora_q_drop, lora_v_drop;
        Mat lora_q_mid, lora_v_mid;
    };
    std::vector<Layer> layers;

    Mat x_final;
    LnCache final_ln;
    Mat xf;
    std::vector<int> pooled_rows;
    Mat pooled;
    Mat prehead_pre;
    Mat prehead_act;
    Mat head_drop;

    // MLM
    std::vector<int> mlm_positions;
    Mat mlm_in;
    Mat mlm_probs;
};

// ---- construction -------------------------------------------------------

Encoder::~Encoder() = default;

Encoder::Encoder(const EncoderConfig& cfg, uint64_t init_seed)
    : cfg_(cfg),
      tok_emb_("tok_emb", cfg.vocab_size, cfg.hidden),
      pos_emb_("pos_emb", cfg.max_len, cfg.hidden),
      emb_ln_g_("emb_ln.g", 1, cfg.hidden),
      emb_ln_b_("emb_ln.b", 1, cfg.hidden),
      final_ln_g_("final_ln.g", 1, cfg.hidden),
      final_ln_b_("final_ln.b", 1, cfg.hidden),
      pre_head_w_("pre_head.w", cfg.hidden, cfg.hidden),
      pre_head_b_("pre_head.b", 1, cfg.hidden),
      head_w_("head.w", cfg.hidden, 2),
      head_b_("head.b", 1, 2),
      mlm_w_("mlm.w", cfg.hidden, cfg.vocab_size),
      mlm_b_("mlm.b", 1, cfg.vocab_size) {
    cfg_.validate();
    layers_.reserve(cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) layers_.emplace_back(cfg.hidden, cfg.ffn, l);

    uint64_t stream = 0;
    for (Param* p : parameters()) {
        Rng rng(derive_seed(init_seed, stream++));
        const std::string& n = p->name;
        const bool is_ln_gain = n.ends_with("ln.g") || n.ends_with("ln1.g") || n.ends_with("ln2.g");
        const bool is_bias = n.ends_with(".b") || n.ends_with("bq") || n.ends_with("bk") ||
                             n.ends_with("bv") || n.ends_with("bo") || n.ends_with("b1") ||
                             n.ends_with("b2");
        if (is_ln_gain) {
            std::fill(p->w.d.begin(), p->w.d.end(), 1.0f);
        } else if (is_bias) {
            p->w.zero();
        } else {
            fill_normal(p->w, rng, 0.02);
        }
    }
}

std::vector<Param*> Encoder::parameters() {
    std::vector<Param*> out = {&tok_emb_, &pos_emb_, &emb_ln_g_, &emb_ln_b_};
    for (auto& l : layers_) {
        for (Param* p : {&l.ln1_g, &l.ln1_b, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo,
                         &l.bo, &l.ln2_g, &l.ln2_b, &l.w1, &l.b1, &l.w2, &l.b2})
            out.push_back(p);
        for (auto* p : {l.lora_qa.get(), l.lora_qb.get(), l.lora_va.get(), l.lora_vb.get()})
            if (p) out.push_back(p);
    }
    for (Param* p : {&final_ln_g_, &final_ln_b_, &pre_head_w_, &pre_head_b_, &head_w_, &head_b_,
                     &mlm_w_, &mlm_b_})
        out.push_back(p);
    return out;
}

std::vector<const Param*> Encoder::parameters() const {
    auto* self = const_cast<Encoder*>(this);
    std::vector<const Param*> out;
    for (Param* p : self->parameters()) out.push_back(p);
    return out;
}

std::vector<Param*> Encoder::trainable_parameters() {
    std::vector<Param*> out;
    for (Param* p : parameters())
        if (p->trainable) out.push_back(p);
    return out;
}

void Encoder::enable_lora(const LoraConfig& lc, uint64_t seed) {
    if (lc.rank < 1 || lc.alpha <= 0) throw ConfigError("LoRA rank/alpha must be positive");
    lora_ = lc;
    uint64_t stream = 1000;
    for (size_t i = 0; i < layers_.size(); ++i) {
        auto& l = layers_[i];
        const std::string base = "layer" + std::to_string(i);
        l.lora_qa = std::make_unique<Param>(base + ".lora_qa", cfg_.hidden, lc.rank);
        l.lora_qb = std::make_unique<Param>(base + ".lora_qb", lc.rank, cfg_.hidden);
        l.lora_va = std::make_unique<Param>(base + ".lora_va", cfg_.hidden, lc.rank);
        l.lora_vb = std::make_unique<Param>(base + ".lora_vb", lc.rank, cfg_.hidden);
        Rng rng(derive_seed(seed, stream++));
        fill_normal(l.lora_qa->w, rng, 0.02);
        fill_normal(l.lora_va->w, rng, 0.02);
        // B starts at zero so the adapted projection equals the base one.
        l.lora_qb->w.zero();
        l.lora_vb->w.zero();
    }
    if (lc.frozen_base) {
        for (Param* p : parameters()) p->trainable = false;
        for (auto& l : layers_)
            for (auto* p : {l.lora_qa.get(), l.lora_qb.get(), l.lora_va.get(), l.lora_vb.get()})
                p->trainable = true;
        // The classification head is part of fine-tuning under LoRA as well.
        pre_head_w_.trainable = pre_head_b_.trainable = true;
        head_w_.trainable = head_b_.trainable = true;
    }
}

size_t Encoder::parameter_count(bool trainable_only) const {
    size_t n = 0;
    for (const Param* p : parameters())
        if (!trainable_only || p->trainable) n += p->w.size();
    return n;
}

void Encoder::zero_grads() {
    for (Param* p : parameters()) p->grad.zero();
}

// ---- forward ------------------------------------------------------------

void Encoder::encode(const Batch& batch, bool train, uint64_t dropout_seed,
                     AttentionCapture* capture) {
    const int B = batch.batch, S = batch.seq, H = cfg_.hidden;
    const int N = B * S;
    const int nh = cfg_.heads, dh = cfg_.head_dim();
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    if (!cache_) cache_ = std::make_unique<Cache>();
    Cache& c = *cache_;
    c.B = B;
    c.S = S;
    c.batch = batch;
    c.train = train;
    c.layers.resize(layers_.size());

    uint64_t drop_stream = 0;
    const auto next_mask = [&](Mat& mask, int rows, int cols, float p) {
        Rng rng(derive_seed(dropout_seed, drop_stream++));
        make_dropout_mask(mask, rows, cols, p, rng);
    };

    // Embeddings + positions.
    c.emb_sum.rows = N;
    c.emb_sum.cols = H;
    c.emb_sum.d.resize(static_cast<size_t>(N) * H);
    for (int b = 0; b < B; ++b)
        for (int s = 0; s < S; ++s) {
            const int32_t id = batch.ids[b * S + s];
            if (id < 0 || id >= cfg_.vocab_size) throw DataError("token id outside vocabulary");
            const float* te = tok_emb_.w.row(id);
            const float* pe = pos_emb_.w.row(s);
            float* dst = c.emb_sum.row(b * S + s);
            for (int h = 0; h < H; ++h) dst[h] = te[h] + pe[h];
        }
    layernorm_forward(c.emb_sum, emb_ln_g_, emb_ln_b_, c.x0, c.emb_ln);
    if (train && cfg_.dropout > 0) {
        next_mask(c.emb_drop, N, H, cfg_.dropout);
        apply_mask(c.x0, c.emb_drop);
    }

    if (capture) {
        capture->probs.assign(layers_.size(), {});
    }

    Mat* x = &c.x0;
    Mat qh(S, dh), kh(S, dh), vh(S, dh), scores(S, S), ctx_h(S, dh);
    for (size_t li = 0; li < layers_.size(); ++li) {
        auto& lw = layers_[li];
        auto& lc = c.layers[li];
        lc.x_in = *x;

        layernorm_forward(lc.x_in, lw.ln1_g, lw.ln1_b, lc.ln1_out, lc.ln1);

        linear_forward(lc.ln1_out, lw.wq.w, lw.bq.w.d, lc.q);
        linear_forward(lc.ln1_out, lw.wk.w, lw.bk.w.d, lc.k);
        linear_forward(lc.ln1_out, lw.wv.w, lw.bv.w.d, lc.v);

        if (lora_) {
            const float lora_scale = lora_->alpha / static_cast<float>(lora_->rank);
            lc.lora_q_in = lc.ln1_out;
            lc.lora_v_in = lc.ln1_out;
            lc.lora_q_drop = Mat();
            lc.lora_v_drop = Mat();
            if (train && lora_->adapter_dropout > 0) {
                next_mask(lc.lora_q_drop, N, H, lora_->adapter_dropout);
                next_mask(lc.lora_v_drop, N, H, lora_->adapter_dropout);
                apply_mask(lc.lora_q_in, lc.lora_q_drop);
                apply_mask(lc.lora_v_in, lc.lora_v_drop);
            }
            lc.lora_q_mid = Mat();
            lc.lora_v_mid = Mat();
            linear_forward(lc.lora_q_in, lw.lora_qa->w, {}, lc.lora_q_mid);
            linear_forward(lc.lora_v_in, lw.lora_va->w, {}, lc.lora_v_mid);
            Mat delta;
            linear_forward(lc.lora_q_mid, lw.lora_qb->w, {}, delta);
            kern::axpy_f32(lora_scale, delta.data(), lc.q.data(), lc.q.size());
            linear_forward(lc.lora_v_mid, lw.lora_vb->w, {}, delta);
            kern::axpy_f32(lora_scale, delta.data(), lc.v.data(), lc.v.size());
        }

        // Scaled dot-product attention per sample and head.
        lc.ctx.rows = N;
        lc.ctx.cols = H;
        lc.ctx.d.assign(static_cast<size_t>(N) * H, 0.0f);
        lc.probs.assign(static_cast<size_t>(B) * nh, Mat());
        if (capture) (*capture).probs[li].assign(nh, Mat(S, S));
        for (int b = 0; b < B; ++b) {
            for (int h = 0; h < nh; ++h) {
                for (int s = 0; s < S; ++s) {
                    const float* qrow = lc.q.row(b * S + s) + h * dh;
                    const float* krow = lc.k.row(b * S + s) + h * dh;
                    const float* vrow = lc.v.row(b * S + s) + h * dh;
                    for (int dd = 0; dd < dh; ++dd) {
                        qh.at(s, dd) = qrow[dd] * scale;
                        kh.at(s, dd) = krow[dd];
                        vh.at(s, dd) = vrow[dd];
                    }
                }
                kern::matmul_nt_f32(qh.data(), kh.data(), scores.data(), S, dh, S);
                for (int i = 0; i < S; ++i) {
                    float* srow = scores.row(i);
                    for (int j = 0; j < S; ++j) {
                        if (!batch.mask[b * S + j] || (cfg_.causal && j > i)) srow[j] = kMaskBias;
                    }
                }
                kern::softmax_rows_f32(scores.data(), S, S);
                Mat& p = lc.probs[b * nh + h];
                p = scores;
                if (capture && b == 0) (*capture).probs[li][h] = scores;
                kern::matmul_f32(p.data(), vh.data(), ctx_h.data(), S, S, dh);
                for (int s = 0; s < S; ++s) {
                    float* dst = lc.ctx.row(b * S + s) + h * dh;
                    const float* src = ctx_h.row(s);
                    for (int dd = 0; dd < dh; ++dd) dst[dd] = src[dd];
                }
            }
        }

        Mat attn_out;
        linear_forward(lc.ctx, lw.wo.w, lw.bo.w.d, attn_out);
        if (train && cfg_.dropout > 0) {
            next_mask(lc.attn_drop, N, H, cfg_.dropout);
            apply_mask(attn_out, lc.attn_drop);
        }
        lc.x_mid = lc.x_in;
        kern::axpy_f32(1.0f, attn_out.data(), lc.x_mid.data(), lc.x_mid.size());

        layernorm_forward(lc.x_mid, lw.ln2_g, lw.ln2_b, lc.ln2_out, lc.ln2);
        linear_forward(lc.ln2_out, lw.w1.w, lw.b1.w.d, lc.ffn_pre);
        gelu_forward(lc.ffn_pre, lc.ffn_act, lc.ffn_tanh);
        Mat ffn_out;
        linear_forward(lc.ffn_act, lw.w2.w, lw.b2.w.d, ffn_out);
        if (train && cfg_.dropout > 0) {
            next_mask(lc.ffn_drop, N, H, cfg_.dropout);
            apply_mask(ffn_out, lc.ffn_drop);
        }
        c.x_final = lc.x_mid;
        kern::axpy_f32(1.0f, ffn_out.data(), c.x_final.data(), c.x_final.size());
        x = &c.x_final;
    }

    layernorm_forward(c.x_final, final_ln_g_, final_ln_b_, c.xf, c.final_ln);
}

void Encoder::forward(const Batch& batch, Mat& logits, bool train, uint64_t dropout_seed,
                      AttentionCapture* capture) {
    encode(batch, train, dropout_seed, capture);
    Cache& c = *cache_;
    const int B = batch.batch, S = batch.seq, H = cfg_.hidden;

    c.pooled_rows.resize(B);
    c.pooled.rows = B;
    c.pooled.cols = H;
    c.pooled.d.resize(static_cast<size_t>(B) * H);
    for (int b = 0; b < B; ++b) {
        const int pos = cfg_.causal ? batch.last_index[b] : 0;
        c.pooled_rows[b] = b * S + pos;
        std::memcpy(c.pooled.row(b), c.xf.row(c.pooled_rows[b]), sizeof(float) * H);
    }

    linear_forward(c.pooled, pre_head_w_.w, pre_head_b_.w.d, c.prehead_pre);
    c.prehead_act = c.prehead_pre;
    for (auto& v : c.prehead_act.d) v = std::max(v, 0.0f);
    if (train && cfg_.dropout > 0) {
        Rng rng(derive_seed(dropout_seed, 9999));
        make_dropout_mask(c.head_drop, B, H, cfg_.dropout, rng);
        apply_mask(c.prehead_act, c.head_drop);
    } else {
        c.head_drop = Mat();
    }
    linear_forward(c.prehead_act, head_w_.w, head_b_.w.d, logits);
}

// ---- backward -----------------------------------------------------------

void Encoder::backward(const Batch& batch, const Mat& dlogits) {
    Cache& c = *cache_;
    const int B = batch.batch, S = batch.seq, H = cfg_.hidden;
    const int N = B * S;

    // Head chain.
    Mat dprehead_act;
    linear_backward(c.prehead_act, head_w_.w, dlogits, dprehead_act, head_w_.grad,
                    &head_b_.grad.d);
    if (c.head_drop.size() > 0) apply_mask(dprehead_act, c.head_drop);
    for (size_t i = 0; i < dprehead_act.size(); ++i)
        if (c.prehead_pre.d[i] <= 0.0f) dprehead_act.d[i] = 0.0f;
    Mat dpooled;
    linear_backward(c.pooled, pre_head_w_.w, dprehead_act, dpooled, pre_head_w_.grad,
                    &pre_head_b_.grad.d);

    Mat dxf(N, H);
    for (int b = 0; b < B; ++b) {
        float* dst = dxf.row(c.pooled_rows[b]);
        const float* src = dpooled.row(b);
        for (int h = 0; h < H; ++h) dst[h] += src[h];
    }

    // Final LN back to the stack.
    Mat dx;
    layernorm_backward(c.x_final, final_ln_g_, c.final_ln, dxf, dx, final_ln_g_, final_ln_b_);
    backward_through_stack(batch, std::move(dx));
}

void Encoder::backward_through_stack(const Batch& batch, Mat dx) {
    Cache& c = *cache_;
    const int B = batch.batch, S = batch.seq, H = cfg_.hidden;
    const int N = B * S;
    const int nh = cfg_.heads, dh = cfg_.head_dim();
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    Mat qh(S, dh), kh(S, dh), vh(S, dh);
    Mat dqh(S, dh), dkh(S, dh), dvh(S, dh), dctx_h(S, dh), dprobs(S, S), dscores(S, S);
    for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
        auto& lw = layers_[li];
        auto& lc = c.layers[li];

        // FFN sublayer: dx covers x_out = x_mid + drop(W2 gelu(W1 ln2(x_mid))).
        Mat dffn_out = dx;
        if (lc.ffn_drop.size() > 0) apply_mask(dffn_out, lc.ffn_drop);
        Mat dffn_act;
        linear_backward(lc.ffn_act, lw.w2.w, dffn_out, dffn_act, lw.w2.grad, &lw.b2.grad.d);
        Mat dffn_pre;
        gelu_backward(lc.ffn_pre, lc.ffn_tanh, dffn_act, dffn_pre);
        Mat dln2_out;
        linear_backward(lc.ln2_out, lw.w1.w, dffn_pre, dln2_out, lw.w1.grad, &lw.b1.grad.d);
        Mat dx_mid;
        layernorm_backward(lc.x_mid, lw.ln2_g, lc.ln2, dln2_out, dx_mid, lw.ln2_g, lw.ln2_b);
        kern::axpy_f32(1.0f, dx.data(), dx_mid.data(), dx_mid.size()); // residual

        // Attention sublayer: x_mid = x_in + drop(Wo ctx).
        Mat dattn_out = dx_mid;
        if (lc.attn_drop.size() > 0) apply_mask(dattn_out, lc.attn_drop);
        Mat dctx;
        linear_backward(lc.ctx, lw.wo.w, dattn_out, dctx, lw.wo.grad, &lw.bo.grad.d);

        Mat dq(N, H), dk(N, H), dv(N, H);
        for (int b = 0; b < B; ++b) {
            for (int h = 0; h < nh; ++h) {
                for (int s = 0; s < S; ++s) {
                    const float* qrow = lc.q.row(b * S + s) + h * dh;
                    const float* krow = lc.k.row(b * S + s) + h * dh;
                    const float* vrow = lc.v.row(b * S + s) + h * dh;
                    const float* dcrow = dctx.row(b * S + s) + h * dh;
                    for (int dd = 0; dd < dh; ++dd) {
                        qh.at(s, dd) = qrow[dd] * scale;
                        kh.at(s, dd) = krow[dd];
                        vh.at(s, dd) = vrow[dd];
                        dctx_h.at(s, dd) = dcrow[dd];
                    }
                }
                const Mat& p = lc.probs[b * nh + h];
                kern::matmul_nt_f32(dctx_h.data(), vh.data(), dprobs.data(), S, dh, S);
                kern::matmul_tn_f32(p.data(), dctx_h.data(), dvh.data(), S, S, dh);
                // Softmax backward: dS = P o (dP - rowsum(dP o P)).
                for (int i = 0; i < S; ++i) {
                    const float* prow = p.row(i);
                    const float* dprow = dprobs.row(i);
                    float* dsrow = dscores.row(i);
                    float dot = 0;
                    for (int j = 0; j < S; ++j) dot += prow[j] * dprow[j];
                    for (int j = 0; j < S; ++j) dsrow[j] = prow[j] * (dprow[j] - dot);
                }
                kern::matmul_f32(dscores.data(), kh.data(), dqh.data(), S, S, dh);
                kern::matmul_tn_f32(dscores.data(), qh.data(), dkh.data(), S, S, dh);
                for (int s = 0; s < S; ++s) {
                    float* dqrow = dq.row(b * S + s) + h * dh;
                    float* dkrow = dk.row(b * S + s) + h * dh;
                    float* dvrow = dv.row(b * S + s) + h * dh;
                    for (int dd = 0; dd < dh; ++dd) {
                        dqrow[dd] = dqh.at(s, dd) * scale;
                        dkrow[dd] = dkh.at(s, dd);
                        dvrow[dd] = dvh.at(s, dd);
                    }
                }
            }
        }

        Mat dln1_a, dln1_b2, dln1_c;
        linear_backward(lc.ln1_out, lw.wq.w, dq, dln1_a, lw.wq.grad, &lw.bq.grad.d);
        linear_backward(lc.ln1_out, lw.wk.w, dk, dln1_b2, lw.wk.grad, &lw.bk.grad.d);
        linear_backward(lc.ln1_out, lw.wv.w, dv, dln1_c, lw.wv.grad, &lw.bv.grad.d);
        kern::axpy_f32(1.0f, dln1_b2.data(), dln1_a.data(), dln1_a.size());
        kern::axpy_f32(1.0f, dln1_c.data(), dln1_a.data(), dln1_a.size());

        if (lora_) {
            // Adapter branch: q += scale * (drop(ln1) A_q) B_q, same for v.
            const float lora_scale = lora_->alpha / static_cast<float>(lora_->rank);
            Mat dscaled, dmid, dlin;
            dscaled = dq;
            for (auto& g : dscaled.d) g *= lora_scale;
            linear_backward(lc.lora_q_mid, lw.lora_qb->w, dscaled, dmid, lw.lora_qb->grad,
                            nullptr);
            linear_backward(lc.lora_q_in, lw.lora_qa->w, dmid, dlin, lw.lora_qa->grad, nullptr);
            if (lc.lora_q_drop.size() > 0) apply_mask(dlin, lc.lora_q_drop);
            kern::axpy_f32(1.0f, dlin.data(), dln1_a.data(), dln1_a.size());
            dscaled = dv;
            for (auto& g : dscaled.d) g *= lora_scale;
            linear_backward(lc.lora_v_mid, lw.lora_vb->w, dscaled, dmid, lw.lora_vb->grad,
                            nullptr);
            linear_backward(lc.lora_v_in, lw.lora_va->w, dmid, dlin, lw.lora_va->grad, nullptr);
            if (lc.lora_v_drop.size() > 0) apply_mask(dlin, lc.lora_v_drop);
            kern::axpy_f32(1.0f, dlin.data(), dln1_a.data(), dln1_a.size());
        }

        Mat dx_in;
        layernorm_backward(lc.x_in, lw.ln1_g, lc.ln1, dln1_a, dx_in, lw.ln1_g, lw.ln1_b);
        kern::axpy_f32(1.0f, dx_mid.data(), dx_in.data(), dx_in.size()); // residual
        dx = std::move(dx_in);
    }

    // Embedding LN and tables.
    if (c.emb_drop.size() > 0) apply_mask(dx, c.emb_drop);
    Mat demb;
    layernorm_backward(c.emb_sum, emb_ln_g_, c.emb_ln, dx, demb, emb_ln_g_, emb_ln_b_);
    for (int b = 0; b < B; ++b)
        for (int s = 0; s < S; ++s) {
            const int32_t id = batch.ids[b * S + s];
            const float* src = demb.row(b * S + s);
            float* te = tok_emb_.grad.row(id);
            float* pe = pos_emb_.grad.row(s);
            for (int h = 0; h < H; ++h) {
                te[h] += src[h];
                pe[h] += src[h];
            }
        }
}

// ---- masked-token objective ----------------------------------------------

float Encoder::mlm_step(const Batch& batch, const std::vector<int>& positions,
                        const std::vector<int32_t>& targets, bool train, uint64_t dropout_seed) {
    if (positions.empty()) throw DataError("mlm_step needs at least one masked position");
    encode(batch, train, dropout_seed, nullptr);
    Cache& c = *cache_;
    const int H = cfg_.hidden;
    const int M = static_cast<int>(positions.size());
    const int V = cfg_.vocab_size;

    c.mlm_positions = positions;
    c.mlm_in.rows = M;
    c.mlm_in.cols = H;
    c.mlm_in.d.resize(static_cast<size_t>(M) * H);
    for (int i = 0; i < M; ++i)
        std::memcpy(c.mlm_in.row(i), c.xf.row(positions[i]), sizeof(float) * H);

    Mat logits;
    linear_forward(c.mlm_in, mlm_w_.w, mlm_b_.w.d, logits);
    kern::softmax_rows_f32(logits.data(), M, V);
    c.mlm_probs = logits;

    double loss = 0;
    for (int i = 0; i < M; ++i)
        loss -= std::log(std::max(1e-12f, c.mlm_probs.at(i, targets[i])));
    loss /= M;

    if (train) {
        Mat dlogits = c.mlm_probs;
        const float inv_m = 1.0f / static_cast<float>(M);
        for (int i = 0; i < M; ++i) {
            dlogits.at(i, targets[i]) -= 1.0f;
            float* row = dlogits.row(i);
            for (int j = 0; j < V; ++j) row[j] *= inv_m;
        }
        Mat dmlm_in;
        linear_backward(c.mlm_in, mlm_w_.w, dlogits, dmlm_in, mlm_w_.grad, &mlm_b_.grad.d);

        const int B = batch.batch, S = batch.seq;
        const int N = B * S;
        Mat dxf(N, H);
        for (int i = 0; i < M; ++i) {
            float* dst = dxf.row(positions[i]);
            const float* src = dmlm_in.row(i);
            for (int h = 0; h < H; ++h) dst[h] += src[h];
        }
        Mat dx;
        layernorm_backward(c.x_final, final_ln_g_, c.final_ln, dxf, dx, final_ln_g_,
                           final_ln_b_);
        backward_through_stack(batch, std::move(dx));
    }
    return static_cast<float>(loss);
}

// ---- serialization -------------------------------------------------------

std::map<std::string, Mat> Encoder::export_weights() const {
    std::map<std::string, Mat> out;
    for (const Param* p : parameters()) out.emplace(p->name, p->w);
    return out;
}

void Encoder::import_weights(const std::map<std::string, Mat>& weights) {
    for (Param* p : parameters()) {
        const auto it = weights.find(p->name);
        if (it == weights.end()) throw DataError("missing tensor '" + p->name + "' in weights");
        if (!p->w.same_shape(it->second))
            throw DataError("shape mismatch for tensor '" + p->name + "'");
        p->w = it->second;
    }
}

uint64_t Encoder::weights_fingerprint() const {
    uint64_t h = cfg_.fingerprint();
    for (const Param* p : parameters()) {
        h = fnv1a64_str(p->name, h);
        h = fnv1a64(p->w.data(), p->w.size() * sizeof(float), h);
    }
    return h;
}

} // namespace tcdr::model
