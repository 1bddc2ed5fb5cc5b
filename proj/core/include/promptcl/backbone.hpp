// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "promptcl/types.hpp"
#include "promptcl/vocab.hpp"

namespace promptcl {

struct BackboneDims {
    int d_model = 64;
    int n_enc_layers = 2;
    int n_dec_layers = 2;
    int n_heads = 4;
    int d_ff = 128;
    int max_seq = 96;

    void validate() const;
};

struct LayerNormParams {
    Vec gain, bias;
};
struct AttentionParams {
    Mat wq, wk, wv, wo;  // d×d, applied as x * W
};
struct FeedForwardParams {
    Mat w1;  // d×d_ff
    Vec b1;
    Mat w2;  // d_ff×d
    Vec b2;
};
struct EncoderLayerParams {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    FeedForwardParams ff;
};
struct DecoderLayerParams {
    LayerNormParams ln1, ln2, ln3;
    AttentionParams self_attn, cross_attn;
    FeedForwardParams ff;
};

// Full parameter set of the encoder-decoder stack. Also used as the gradient
// accumulator (same shapes). visit() enumerates tensors in a fixed order; that
// order defines the serialization layout and the parameter digest.
struct BackboneParams {
    Mat embed;  // V×d
    std::vector<EncoderLayerParams> enc;
    std::vector<DecoderLayerParams> dec;
    LayerNormParams enc_ln, dec_ln;
    Mat w_out;  // d×V
    Vec b_out;  // V

    template <typename F>
    void visit(F&& f) {
        f("embed", embed);
        for (std::size_t i = 0; i < enc.size(); ++i) {
            const std::string p = "enc" + std::to_string(i) + ".";
            auto& l = enc[i];
            f(p + "ln1.g", l.ln1.gain);
            f(p + "ln1.b", l.ln1.bias);
            f(p + "wq", l.attn.wq);
            f(p + "wk", l.attn.wk);
            f(p + "wv", l.attn.wv);
            f(p + "wo", l.attn.wo);
            f(p + "ln2.g", l.ln2.gain);
            f(p + "ln2.b", l.ln2.bias);
            f(p + "ff.w1", l.ff.w1);
            f(p + "ff.b1", l.ff.b1);
            f(p + "ff.w2", l.ff.w2);
            f(p + "ff.b2", l.ff.b2);
        }
        for (std::size_t i = 0; i < dec.size(); ++i) {
            const std::string p = "dec" + std::to_string(i) + ".";
            auto& l = dec[i];
            f(p + "ln1.g", l.ln1.gain);
            f(p + "ln1.b", l.ln1.bias);
            f(p + "self.wq", l.self_attn.wq);
            f(p + "self.wk", l.self_attn.wk);
            f(p + "self.wv", l.self_attn.wv);
            f(p + "self.wo", l.self_attn.wo);
            f(p + "ln2.g", l.ln2.gain);
            f(p + "ln2.b", l.ln2.bias);
            f(p + "cross.wq", l.cross_attn.wq);
            f(p + "cross.wk", l.cross_attn.wk);
            f(p + "cross.wv", l.cross_attn.wv);
            f(p + "cross.wo", l.cross_attn.wo);
            f(p + "ln3.g", l.ln3.gain);
            f(p + "ln3.b", l.ln3.bias);
            f(p + "ff.w1", l.ff.w1);
            f(p + "ff.b1", l.ff.b1);
            f(p + "ff.w2", l.ff.w2);
            f(p + "ff.b2", l.ff.b2);
        }
        f("enc_ln.g", enc_ln.gain);
        f("enc_ln.b", enc_ln.bias);
        f("dec_ln.g", dec_ln.gain);
        f("dec_ln.b", dec_ln.bias);
        f("w_out", w_out);
        f("b_out", b_out);
    }
    template <typename F>
    void visit(F&& f) const {
        const_cast<BackboneParams*>(this)->visit(
            [&f](const std::string& name, auto& t) { f(name, std::as_const(t)); });
    }

    std::size_t scalar_count() const;
    BackboneParams zeros_like() const;
    void set_zero();
};

// --------------------------------------------------------------------------
// forward tape

struct LayerNormTape {
    Mat xhat;
    Vec inv_std;
};
struct AttnTape {
    Mat in_q;   // LN output feeding the query projection
    Mat in_kv;  // LN output (self) or memory (cross) feeding key/value
    Mat q, k, v;
    std::vector<Mat> probs;  // per head, Tq×Tk
    Mat concat;              // Tq×d before the output projection
};
struct FfTape {
    Mat in;    // LN output feeding w1
    Mat hact;  // post-ReLU hidden
};

struct EncTape {
    bool valid = false;
    int n_lead = 0;
    std::vector<int> token_ids;  // encoder token part (input ids + <eos>)
    struct Layer {
        LayerNormTape ln1, ln2;
        AttnTape attn;
        FfTape ff;
    };
    std::vector<Layer> layers;
    LayerNormTape final_ln;
    Mat enc_out;  // T_e×d, cross-attention memory
};

struct DecTape {
    bool valid = false;
    std::vector<int> dec_in_ids;
    struct Layer {
        LayerNormTape ln1, ln2, ln3;
        AttnTape self_attn, cross_attn;
        FfTape ff;
    };
    std::vector<Layer> layers;
    LayerNormTape final_ln;
    Mat dec_out;  // T_d×d
};

struct Tape {
    EncTape enc;
    DecTape dec;
    bool valid() const { return enc.valid && dec.valid; }
};

// Per-sample log-probability rows collected over a batch. Samples are kept
// unpadded, so every stored position is a real target position.
struct BatchLogits {
    std::vector<Mat> logprobs;      // per sample, T_i×V
    std::vector<int> target_count;  // positions contributing to losses
};

struct DecodeStrategy {
    enum class Kind { greedy, sample };
    Kind kind = Kind::greedy;
    double temperature = 1.0;
    int top_k = 0;  // 0 means no truncation

    static DecodeStrategy greedy() { return {}; }
    static DecodeStrategy sample(double temperature, int top_k) {
        return {Kind::sample, temperature, top_k};
    }
};

struct PretrainConfig {
    int epochs = 10;
    int batch_size = 16;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;
    std::uint64_t seed = 0;
};

struct PretrainStats {
    std::vector<double> epoch_loss;  // mean token NLL per epoch
};

// --------------------------------------------------------------------------

// Word-level encoder-decoder transformer. Trainable while unfrozen (the
// synthetic pretraining phase); bit-frozen afterwards, at which point the only
// differentiable inputs are embedding rows prepended to the encoder input.
class Backbone {
public:
    Backbone(Vocabulary vocab, BackboneDims dims, std::uint64_t seed);

    const Vocabulary& vocab() const { return vocab_; }
    const BackboneDims& dims() const { return dims_; }
    const BackboneParams& params() const { return params_; }

    bool frozen() const { return frozen_; }
    void freeze();
    // digest recorded at freeze time
    std::uint64_t checksum() const { return checksum_; }
    // digest of the current parameter bytes
    std::uint64_t digest_now() const;

    Vec embed_row(int token_id) const;

    // Encoder pass. lead_embeds rows (soft prompt / generation token) are
    // prepended before the input tokens; <eos> is appended; positions are
    // assigned over the concatenated sequence. Returns the cross-attention
    // memory (T_e×d).
    Mat encode(const Mat* lead_embeds, std::span<const int> input_ids, EncTape* tape) const;

    // Teacher-forced decoder pass over the full target prefix; returns
    // per-position vocabulary log-probabilities (rows sum to one after exp).
    // dec_in_ids must already be shifted (leading <pad> start token).
    Mat decoder_forward(const Mat& enc_out, std::span<const int> dec_in_ids, DecTape* tape) const;

    // encode + teacher-forced decode against target_ids (which include the
    // final <eos>). Returns T×V log-probabilities, T = |target_ids|.
    Mat forward(const Mat* lead_embeds, std::span<const int> input_ids,
                std::span<const int> target_ids, Tape* tape = nullptr) const;

    // Backpropagates d(loss)/d(scores) through the recorded forward.
    // Returns d(loss)/d(lead_embeds) (n_lead×d; empty if no lead rows).
    // With param_grads set, also accumulates gradients for all backbone
    // parameters (pretraining / full fine-tuning); frozen backbones reject
    // that path.
    Mat backward(const Tape& tape, const Mat& dscores, BackboneParams* param_grads = nullptr) const;

    // Autoregressive decode; emits up to max_len tokens and stops after
    // emitting <eos>. Sampling is reproducible under a fixed seed.
    std::vector<int> decode(const Mat* lead_embeds, std::span<const int> input_ids, int max_len,
                            const DecodeStrategy& strategy, std::uint64_t seed) const;

    // Full-parameter training on (input, output) text pairs; freezes the
    // model and records its checksum on completion.
    PretrainStats pretrain(const std::vector<std::pair<std::string, std::string>>& corpus,
                           const PretrainConfig& config);

    // Copy with training re-enabled (full fine-tuning baselines).
    Backbone unfrozen_copy() const;

    void save(const std::string& path) const;
    static Backbone load(const std::string& path);

    // exposed for full fine-tuning; rejected while frozen
    BackboneParams& mutable_params();

    const Mat& positional_table() const { return pos_; }

private:
    Backbone() = default;

    Mat embed_sequence(std::span<const int> ids, int pos_offset) const;

    Vocabulary vocab_;
    BackboneDims dims_;
    BackboneParams params_;
    Mat pos_;  // max_seq×d sinusoidal table, derived (not a parameter)
    bool frozen_ = false;
    std::uint64_t checksum_ = 0;
};

}  // namespace promptcl
