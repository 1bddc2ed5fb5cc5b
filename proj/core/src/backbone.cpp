// SPDX-License-Identifier: Apache-2.0
#include "promptcl/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "promptcl/digest.hpp"
#include "promptcl/optim.hpp"
#include "promptcl/rng.hpp"

namespace promptcl {
namespace {

constexpr double kPosScale = 0.5;
constexpr double kEmbedInitStd = 0.5;
constexpr double kLnEps = 1e-5;
constexpr double kMaskValue = -1e30;
constexpr char kMagic[4] = {'P', 'C', 'B', 'M'};
constexpr std::uint32_t kFileVersion = 1;

void xavier_init(Mat& m, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            m(r, c) = (rng.uniform() * 2.0 - 1.0) * bound;
        }
    }
}

Mat build_positional_table(const BackboneDims& dims) {
    Mat pos(dims.max_seq, dims.d_model);
    for (int p = 0; p < dims.max_seq; ++p) {
        for (int i = 0; i < dims.d_model; i += 2) {
            const double angle =
                p / std::pow(10000.0, static_cast<double>(i) / dims.d_model);
            pos(p, i) = std::sin(angle);
            if (i + 1 < dims.d_model) pos(p, i + 1) = std::cos(angle);
        }
    }
    return pos;
}

Mat layer_norm_forward(const Mat& x, const LayerNormParams& p, LayerNormTape* tape) {
    const Eigen::Index T = x.rows(), d = x.cols();
    Mat xhat(T, d);
    Vec inv_std(T);
    for (Eigen::Index r = 0; r < T; ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + kLnEps);
        xhat.row(r) = (x.row(r).array() - mean) * is;
        inv_std[r] = is;
    }
    Mat y = xhat;
    y.array().rowwise() *= p.gain.transpose().array();
    y.array().rowwise() += p.bias.transpose().array();
    if (tape) {
        tape->xhat = std::move(xhat);
        tape->inv_std = std::move(inv_std);
    }
    return y;
}

Mat layer_norm_backward(const Mat& dy, const LayerNormTape& t, const LayerNormParams& p,
                        LayerNormParams* dp) {
    const Eigen::Index T = dy.rows(), d = dy.cols();
    if (dp) {
        dp->gain.noalias() += (dy.array() * t.xhat.array()).colwise().sum().matrix().transpose();
        dp->bias.noalias() += dy.colwise().sum().transpose();
    }
    Mat gdy = dy;
    gdy.array().rowwise() *= p.gain.transpose().array();
    Mat dx(T, d);
    for (Eigen::Index r = 0; r < T; ++r) {
        const double m1 = gdy.row(r).mean();
        const double m2 = (gdy.row(r).array() * t.xhat.row(r).array()).mean();
        dx.row(r) = (gdy.row(r).array() - m1 - t.xhat.row(r).array() * m2) * t.inv_std[r];
    }
    return dx;
}

void softmax_rows_inplace(Mat& s) {
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
    }
}

Mat attention_forward(const Mat& in_q, const Mat& in_kv, const AttentionParams& p, int n_heads,
                      bool causal, AttnTape* tape) {
    const Eigen::Index d = in_q.cols();
    const Eigen::Index dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat q = in_q * p.wq;
    Mat k = in_kv * p.wk;
    Mat v = in_kv * p.wv;
    const Eigen::Index tq = q.rows(), tk = k.rows();
    Mat concat(tq, d);
    std::vector<Mat> probs(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        const Eigen::Index c0 = h * dh;
        Mat s(tq, tk);
        s.noalias() = q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose();
        s *= scale;
        if (causal) {
            for (Eigen::Index i = 0; i < tq; ++i) {
                for (Eigen::Index j = i + 1; j < tk; ++j) s(i, j) = kMaskValue;
            }
        }
        softmax_rows_inplace(s);
        concat.middleCols(c0, dh).noalias() = s * v.middleCols(c0, dh);
        probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    Mat out = concat * p.wo;
    if (tape) {
        tape->in_q = in_q;
        tape->in_kv = in_kv;
        tape->q = std::move(q);
        tape->k = std::move(k);
        tape->v = std::move(v);
        tape->probs = std::move(probs);
        tape->concat = std::move(concat);
    }
    return out;
}

// Returns the query-side input gradient; adds the key/value-side gradient
// into d_in_kv (self-attention passes the same accumulator intent by summing
// the returned value with d_in_kv at the call site).
Mat attention_backward(const Mat& d_out, const AttnTape& t, const AttentionParams& p, int n_heads,
                       Mat& d_in_kv, AttentionParams* dp) {
    const Eigen::Index d = d_out.cols();
    const Eigen::Index dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Eigen::Index tq = t.q.rows(), tk = t.k.rows();

    Mat d_concat = d_out * p.wo.transpose();
    if (dp) dp->wo.noalias() += t.concat.transpose() * d_out;

    Mat dq(tq, d), dk(tk, d), dv(tk, d);
    for (int h = 0; h < n_heads; ++h) {
        const Eigen::Index c0 = h * dh;
        const Mat& prob = t.probs[static_cast<std::size_t>(h)];
        auto d_ch = d_concat.middleCols(c0, dh);
        Mat dprob(tq, tk);
        dprob.noalias() = d_ch * t.v.middleCols(c0, dh).transpose();
        dv.middleCols(c0, dh).noalias() = prob.transpose() * d_ch;
        Mat ds(tq, tk);
        for (Eigen::Index r = 0; r < tq; ++r) {
            const double dot = (dprob.row(r).array() * prob.row(r).array()).sum();
            ds.row(r) = prob.row(r).array() * (dprob.row(r).array() - dot);
        }
        ds *= scale;
        dq.middleCols(c0, dh).noalias() = ds * t.k.middleCols(c0, dh);
        dk.middleCols(c0, dh).noalias() = ds.transpose() * t.q.middleCols(c0, dh);
    }
    if (dp) {
        dp->wq.noalias() += t.in_q.transpose() * dq;
        dp->wk.noalias() += t.in_kv.transpose() * dk;
        dp->wv.noalias() += t.in_kv.transpose() * dv;
    }
    d_in_kv.noalias() += dk * p.wk.transpose();
    d_in_kv.noalias() += dv * p.wv.transpose();
    return dq * p.wq.transpose();
}

Mat ff_forward(const Mat& in, const FeedForwardParams& p, FfTape* tape) {
    Mat h = in * p.w1;
    h.array().rowwise() += p.b1.transpose().array();
    h = h.cwiseMax(0.0);
    Mat out = h * p.w2;
    out.array().rowwise() += p.b2.transpose().array();
    if (tape) {
        tape->in = in;
        tape->hact = std::move(h);
    }
    return out;
}

Mat ff_backward(const Mat& d_out, const FfTape& t, const FeedForwardParams& p,
                FeedForwardParams* dp) {
    if (dp) {
        dp->w2.noalias() += t.hact.transpose() * d_out;
        dp->b2.noalias() += d_out.colwise().sum().transpose();
    }
    Mat dh = d_out * p.w2.transpose();
    dh = (t.hact.array() > 0.0).select(dh, 0.0);
    if (dp) {
        dp->w1.noalias() += t.in.transpose() * dh;
        dp->b1.noalias() += dh.colwise().sum().transpose();
    }
    return dh * p.w1.transpose();
}

}  // namespace

// --------------------------------------------------------------------------

void BackboneDims::validate() const {
    if (d_model < 1 || n_enc_layers < 1 || n_dec_layers < 1 || n_heads < 1 || d_ff < 1 ||
        max_seq < 4) {
        throw std::invalid_argument("BackboneDims: all dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("BackboneDims: d_model must be divisible by n_heads");
    }
}

std::size_t BackboneParams::scalar_count() const {
    std::size_t n = 0;
    visit([&n](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
}

BackboneParams BackboneParams::zeros_like() const {
    BackboneParams out = *this;
    out.set_zero();
    return out;
}

void BackboneParams::set_zero() {
    visit([](const std::string&, auto& t) { t.setZero(); });
}

// --------------------------------------------------------------------------

Backbone::Backbone(Vocabulary vocab, BackboneDims dims, std::uint64_t seed)
    : vocab_(std::move(vocab)), dims_(dims) {
    dims_.validate();
    const int v = vocab_.size();
    const int d = dims_.d_model;

    params_.embed.resize(v, d);
    params_.w_out.resize(d, v);
    params_.b_out = Vec::Zero(v);
    auto make_ln = [d]() { return LayerNormParams{Vec::Ones(d), Vec::Zero(d)}; };
    auto make_attn = [d]() { return AttentionParams{Mat(d, d), Mat(d, d), Mat(d, d), Mat(d, d)}; };
    auto make_ff = [this, d]() {
        return FeedForwardParams{Mat(d, dims_.d_ff), Vec::Zero(dims_.d_ff), Mat(dims_.d_ff, d),
                                 Vec::Zero(d)};
    };
    for (int i = 0; i < dims_.n_enc_layers; ++i) {
        params_.enc.push_back({make_ln(), make_ln(), make_attn(), make_ff()});
    }
    for (int i = 0; i < dims_.n_dec_layers; ++i) {
        params_.dec.push_back({make_ln(), make_ln(), make_ln(), make_attn(), make_attn(),
                               make_ff()});
    }
    params_.enc_ln = make_ln();
    params_.dec_ln = make_ln();

    Rng rng(seed);
    for (Eigen::Index c = 0; c < params_.embed.cols(); ++c) {
        for (Eigen::Index r = 0; r < params_.embed.rows(); ++r) {
            params_.embed(r, c) = rng.normal() * kEmbedInitStd;
        }
    }
    params_.visit([&rng](const std::string& name, auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Mat>) {
            if (name != "embed") xavier_init(t, rng);
        }
    });
    pos_ = build_positional_table(dims_);
}

void Backbone::freeze() {
    frozen_ = true;
    checksum_ = digest_now();
}

std::uint64_t Backbone::digest_now() const {
    Fnv1a h;
    params_.visit([&h](const std::string&, const auto& t) { h.update(t); });
    return h.value();
}

Vec Backbone::embed_row(int token_id) const {
    if (token_id < 0 || token_id >= vocab_.size()) {
        throw std::invalid_argument("Backbone::embed_row: token id out of range");
    }
    return params_.embed.row(token_id).transpose();
}

BackboneParams& Backbone::mutable_params() {
    if (frozen_) throw std::logic_error("Backbone: parameters are frozen");
    return params_;
}

Backbone Backbone::unfrozen_copy() const {
    Backbone b = *this;
    b.frozen_ = false;
    b.checksum_ = 0;
    return b;
}

Mat Backbone::encode(const Mat* lead_embeds, std::span<const int> input_ids, EncTape* tape) const {
    const int d = dims_.d_model;
    const Eigen::Index n_lead = lead_embeds ? lead_embeds->rows() : 0;
    if (lead_embeds && lead_embeds->cols() != d) {
        throw std::invalid_argument("Backbone::encode: lead embedding width != d_model");
    }
    std::vector<int> token_ids(input_ids.begin(), input_ids.end());
    token_ids.push_back(vocab_.eos_id());
    const Eigen::Index te = n_lead + static_cast<Eigen::Index>(token_ids.size());
    if (te > dims_.max_seq) {
        throw std::invalid_argument("Backbone::encode: sequence exceeds max_seq");
    }

    Mat x(te, d);
    if (n_lead > 0) x.topRows(n_lead) = *lead_embeds;
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
        x.row(n_lead + static_cast<Eigen::Index>(i)) = params_.embed.row(token_ids[i]);
    }
    x += kPosScale * pos_.topRows(te);

    if (tape) {
        tape->valid = false;
        tape->n_lead = static_cast<int>(n_lead);
        tape->token_ids = token_ids;
        tape->layers.assign(params_.enc.size(), {});
    }
    for (std::size_t li = 0; li < params_.enc.size(); ++li) {
        const auto& l = params_.enc[li];
        EncTape::Layer* lt = tape ? &tape->layers[li] : nullptr;
        Mat n1 = layer_norm_forward(x, l.ln1, lt ? &lt->ln1 : nullptr);
        x += attention_forward(n1, n1, l.attn, dims_.n_heads, false, lt ? &lt->attn : nullptr);
        Mat n2 = layer_norm_forward(x, l.ln2, lt ? &lt->ln2 : nullptr);
        x += ff_forward(n2, l.ff, lt ? &lt->ff : nullptr);
    }
    Mat enc_out = layer_norm_forward(x, params_.enc_ln, tape ? &tape->final_ln : nullptr);
    if (tape) {
        tape->enc_out = enc_out;
        tape->valid = true;
    }
    return enc_out;
}

Mat Backbone::decoder_forward(const Mat& enc_out, std::span<const int> dec_in_ids,
                              DecTape* tape) const {
    const int d = dims_.d_model;
    const Eigen::Index td = static_cast<Eigen::Index>(dec_in_ids.size());
    if (td < 1) throw std::invalid_argument("Backbone::decoder_forward: empty decoder input");
    if (td > dims_.max_seq) {
        throw std::invalid_argument("Backbone::decoder_forward: sequence exceeds max_seq");
    }

    Mat y(td, d);
    for (Eigen::Index i = 0; i < td; ++i) {
        y.row(i) = params_.embed.row(dec_in_ids[static_cast<std::size_t>(i)]);
    }
    y += kPosScale * pos_.topRows(td);

    if (tape) {
        tape->valid = false;
        tape->dec_in_ids.assign(dec_in_ids.begin(), dec_in_ids.end());
        tape->layers.assign(params_.dec.size(), {});
    }
    for (std::size_t li = 0; li < params_.dec.size(); ++li) {
        const auto& l = params_.dec[li];
        DecTape::Layer* lt = tape ? &tape->layers[li] : nullptr;
        Mat n1 = layer_norm_forward(y, l.ln1, lt ? &lt->ln1 : nullptr);
        y += attention_forward(n1, n1, l.self_attn, dims_.n_heads, true,
                               lt ? &lt->self_attn : nullptr);
        Mat n2 = layer_norm_forward(y, l.ln2, lt ? &lt->ln2 : nullptr);
        y += attention_forward(n2, enc_out, l.cross_attn, dims_.n_heads, false,
                               lt ? &lt->cross_attn : nullptr);
        Mat n3 = layer_norm_forward(y, l.ln3, lt ? &lt->ln3 : nullptr);
        y += ff_forward(n3, l.ff, lt ? &lt->ff : nullptr);
    }
    Mat dec_out = layer_norm_forward(y, params_.dec_ln, tape ? &tape->final_ln : nullptr);

    Mat scores = dec_out * params_.w_out;
    scores.array().rowwise() += params_.b_out.transpose().array();
    // stable log-softmax per row
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const double mx = scores.row(r).maxCoeff();
        const double lse = mx + std::log((scores.row(r).array() - mx).exp().sum());
        scores.row(r).array() -= lse;
    }
    if (tape) {
        tape->dec_out = std::move(dec_out);
        tape->valid = true;
    }
    return scores;
}

Mat Backbone::forward(const Mat* lead_embeds, std::span<const int> input_ids,
                      std::span<const int> target_ids, Tape* tape) const {
    if (target_ids.empty()) {
        throw std::invalid_argument("Backbone::forward: empty target sequence");
    }
    Mat enc_out = encode(lead_embeds, input_ids, tape ? &tape->enc : nullptr);
    std::vector<int> dec_in(target_ids.size());
    dec_in[0] = vocab_.pad_id();
    for (std::size_t i = 1; i < target_ids.size(); ++i) dec_in[i] = target_ids[i - 1];
    return decoder_forward(enc_out, dec_in, tape ? &tape->dec : nullptr);
}

Mat Backbone::backward(const Tape& tape, const Mat& dscores, BackboneParams* param_grads) const {
    if (!tape.valid()) {
        throw std::logic_error("Backbone::backward: no recorded forward pass");
    }
    if (param_grads && frozen_) {
        throw std::logic_error("Backbone::backward: frozen backbone cannot accumulate parameter gradients");
    }
    const Eigen::Index td = tape.dec.dec_out.rows();
    const Eigen::Index te = tape.enc.enc_out.rows();
    if (dscores.rows() != td) {
        throw std::invalid_argument("Backbone::backward: dscores shape mismatch");
    }

    // output head
    Mat d_dec_out = dscores * params_.w_out.transpose();
    if (param_grads) {
        param_grads->w_out.noalias() += tape.dec.dec_out.transpose() * dscores;
        param_grads->b_out.noalias() += dscores.colwise().sum().transpose();
    }

    // decoder stack
    Mat dy = layer_norm_backward(d_dec_out, tape.dec.final_ln, params_.dec_ln,
                                 param_grads ? &param_grads->dec_ln : nullptr);
    Mat d_enc_out = Mat::Zero(te, dims_.d_model);
    for (std::size_t li = params_.dec.size(); li-- > 0;) {
        const auto& l = params_.dec[li];
        const auto& lt = tape.dec.layers[li];
        DecoderLayerParams* lp = param_grads ? &param_grads->dec[li] : nullptr;

        Mat d_n3 = ff_backward(dy, lt.ff, l.ff, lp ? &lp->ff : nullptr);
        dy += layer_norm_backward(d_n3, lt.ln3, l.ln3, lp ? &lp->ln3 : nullptr);

        Mat d_n2 = attention_backward(dy, lt.cross_attn, l.cross_attn, dims_.n_heads, d_enc_out,
                                      lp ? &lp->cross_attn : nullptr);
        dy += layer_norm_backward(d_n2, lt.ln2, l.ln2, lp ? &lp->ln2 : nullptr);

        Mat d_kv = Mat::Zero(td, dims_.d_model);
        Mat d_n1 = attention_backward(dy, lt.self_attn, l.self_attn, dims_.n_heads, d_kv,
                                      lp ? &lp->self_attn : nullptr);
        d_n1 += d_kv;
        dy += layer_norm_backward(d_n1, lt.ln1, l.ln1, lp ? &lp->ln1 : nullptr);
    }
    if (param_grads) {
        for (Eigen::Index i = 0; i < td; ++i) {
            param_grads->embed.row(tape.dec.dec_in_ids[static_cast<std::size_t>(i)]) += dy.row(i);
        }
    }

    // encoder stack, fed by the accumulated cross-attention memory gradient
    Mat dx = layer_norm_backward(d_enc_out, tape.enc.final_ln, params_.enc_ln,
                                 param_grads ? &param_grads->enc_ln : nullptr);
    for (std::size_t li = params_.enc.size(); li-- > 0;) {
        const auto& l = params_.enc[li];
        const auto& lt = tape.enc.layers[li];
        EncoderLayerParams* lp = param_grads ? &param_grads->enc[li] : nullptr;

        Mat d_n2 = ff_backward(dx, lt.ff, l.ff, lp ? &lp->ff : nullptr);
        dx += layer_norm_backward(d_n2, lt.ln2, l.ln2, lp ? &lp->ln2 : nullptr);

        Mat d_kv = Mat::Zero(te, dims_.d_model);
        Mat d_n1 = attention_backward(dx, lt.attn, l.attn, dims_.n_heads, d_kv,
                                      lp ? &lp->attn : nullptr);
        d_n1 += d_kv;
        dx += layer_norm_backward(d_n1, lt.ln1, l.ln1, lp ? &lp->ln1 : nullptr);
    }

    const int n_lead = tape.enc.n_lead;
    if (param_grads) {
        for (std::size_t i = 0; i < tape.enc.token_ids.size(); ++i) {
            param_grads->embed.row(tape.enc.token_ids[i]) +=
                dx.row(n_lead + static_cast<Eigen::Index>(i));
        }
    }
    return dx.topRows(n_lead);
}

std::vector<int> Backbone::decode(const Mat* lead_embeds, std::span<const int> input_ids,
                                  int max_len, const DecodeStrategy& strategy,
                                  std::uint64_t seed) const {
    if (max_len < 1) throw std::invalid_argument("Backbone::decode: max_len must be >= 1");
    const Mat enc_out = encode(lead_embeds, input_ids, nullptr);
    Rng rng(seed);
    std::vector<int> out;
    std::vector<int> dec_in = {vocab_.pad_id()};
    for (int step = 0; step < max_len; ++step) {
        const Mat lp = decoder_forward(enc_out, dec_in, nullptr);
        const Eigen::Index last = lp.rows() - 1;
        int tok;
        if (strategy.kind == DecodeStrategy::Kind::greedy) {
            Eigen::Index arg = 0;
            lp.row(last).maxCoeff(&arg);
            tok = static_cast<int>(arg);
        } else {
            const double temp = std::max(strategy.temperature, 1e-8);
            Vec logits = lp.row(last).transpose() / temp;
            const Eigen::Index v = logits.size();
            std::vector<Eigen::Index> order(static_cast<std::size_t>(v));
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&logits](Eigen::Index a, Eigen::Index b) {
                if (logits[a] != logits[b]) return logits[a] > logits[b];
                return a < b;
            });
            const std::size_t keep =
                strategy.top_k > 0 ? std::min<std::size_t>(static_cast<std::size_t>(strategy.top_k),
                                                           order.size())
                                   : order.size();
            const double mx = logits[order[0]];
            std::vector<double> weights(keep);
            for (std::size_t i = 0; i < keep; ++i) weights[i] = std::exp(logits[order[i]] - mx);
            tok = static_cast<int>(order[rng.categorical(weights)]);
        }
        out.push_back(tok);
        if (tok == vocab_.eos_id()) break;
        dec_in.push_back(tok);
    }
    return out;
}

PretrainStats Backbone::pretrain(const std::vector<std::pair<std::string, std::string>>& corpus,
                                 const PretrainConfig& config) {
    if (frozen_) throw std::logic_error("Backbone::pretrain: backbone is frozen");
    if (corpus.empty()) throw std::invalid_argument("Backbone::pretrain: empty corpus");

    std::vector<std::vector<int>> inputs, targets;
    inputs.reserve(corpus.size());
    targets.reserve(corpus.size());
    for (const auto& [in, out] : corpus) {
        inputs.push_back(vocab_.tokenize(in));
        auto t = vocab_.tokenize(out);
        t.push_back(vocab_.eos_id());
        targets.push_back(std::move(t));
    }

    Adam opt(params_.scalar_count(), {config.lr, config.beta1, config.beta2, config.eps});
    BackboneParams grads = params_.zeros_like();

    std::vector<ParamBlock> blocks;
    std::vector<GradView> grad_views;
    params_.visit([&blocks](const std::string&, auto& t) {
        blocks.push_back({t.data(), nullptr, static_cast<std::size_t>(t.size())});
    });
    std::size_t bi = 0;
    grads.visit([&blocks, &grad_views, &bi](const std::string&, auto& t) {
        blocks[bi++].grad = t.data();
        grad_views.push_back({t.data(), static_cast<std::size_t>(t.size())});
    });

    Rng rng(config.seed);
    std::vector<std::size_t> perm(corpus.size());
    std::iota(perm.begin(), perm.end(), 0);

    PretrainStats stats;
    long global_step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(perm));
        double nll_sum = 0.0;
        std::size_t token_sum = 0;
        for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
            const std::size_t end = std::min(perm.size(), start + config.batch_size);
            std::size_t batch_tokens = 0;
            for (std::size_t s = start; s < end; ++s) batch_tokens += targets[perm[s]].size();

            grads.set_zero();
            double batch_nll = 0.0;
            for (std::size_t s = start; s < end; ++s) {
                const auto& in = inputs[perm[s]];
                const auto& tgt = targets[perm[s]];
                Tape tape;
                Mat lp = forward(nullptr, in, tgt, &tape);
                Mat dscores = lp.array().exp();
                for (std::size_t t = 0; t < tgt.size(); ++t) {
                    batch_nll -= lp(static_cast<Eigen::Index>(t), tgt[t]);
                    dscores(static_cast<Eigen::Index>(t), tgt[t]) -= 1.0;
                }
                dscores /= static_cast<double>(batch_tokens);
                backward(tape, dscores, &grads);
            }
            ++global_step;
            if (!std::isfinite(batch_nll)) {
                throw std::runtime_error("Backbone::pretrain: non-finite loss at step " +
                                         std::to_string(global_step));
            }
            nll_sum += batch_nll;
            token_sum += batch_tokens;
            clip_global_norm(grad_views, config.clip_norm);
            opt.step(blocks);
        }
        stats.epoch_loss.push_back(nll_sum / static_cast<double>(token_sum));
    }
    freeze();
    return stats;
}

// --------------------------------------------------------------------------
// serialization

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i32(std::ostream& os, std::int32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::int32_t read_i32(std::istream& is) {
    std::int32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::string read_string(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

}  // namespace

void Backbone::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("Backbone::save: cannot open " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kFileVersion);
    write_i32(os, dims_.d_model);
    write_i32(os, dims_.n_enc_layers);
    write_i32(os, dims_.n_dec_layers);
    write_i32(os, dims_.n_heads);
    write_i32(os, dims_.d_ff);
    write_i32(os, dims_.max_seq);

    const int gen_slots = static_cast<int>(vocab_.gen_slot_ids().size());
    const int prefix = 6 + gen_slots;
    write_i32(os, gen_slots);
    write_u32(os, static_cast<std::uint32_t>(vocab_.size() - prefix));
    for (int i = prefix; i < vocab_.size(); ++i) write_string(os, vocab_.token(i));

    os.put(frozen_ ? 1 : 0);
    write_u64(os, checksum_);

    std::uint32_t tensor_count = 0;
    params_.visit([&tensor_count](const std::string&, const auto&) { ++tensor_count; });
    write_u32(os, tensor_count);
    params_.visit([&os](const std::string& name, const auto& t) {
        write_string(os, name);
        write_u32(os, static_cast<std::uint32_t>(t.rows()));
        write_u32(os, static_cast<std::uint32_t>(t.cols()));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(sizeof(double) * t.size()));
    });
    if (!os) throw std::runtime_error("Backbone::save: write failed for " + path);
}

Backbone Backbone::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("Backbone::load: cannot open " + path);
    char magic[4];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("Backbone::load: not a backbone model file: " + path);
    }
    if (read_u32(is) != kFileVersion) {
        throw std::runtime_error("Backbone::load: unsupported file version in " + path);
    }
    BackboneDims dims;
    dims.d_model = read_i32(is);
    dims.n_enc_layers = read_i32(is);
    dims.n_dec_layers = read_i32(is);
    dims.n_heads = read_i32(is);
    dims.d_ff = read_i32(is);
    dims.max_seq = read_i32(is);

    const int gen_slots = read_i32(is);
    const std::uint32_t n_words = read_u32(is);
    std::vector<std::string> words(n_words);
    for (auto& w : words) w = read_string(is);
    Vocabulary vocab = Vocabulary::build(words, gen_slots);

    const bool frozen = is.get() == 1;
    const std::uint64_t stored_checksum = read_u64(is);

    Backbone b(std::move(vocab), dims, /*seed=*/0);
    const std::uint32_t tensor_count = read_u32(is);
    std::uint32_t seen = 0;
    b.params_.visit([&](const std::string& name, auto& t) {
        const std::string stored_name = read_string(is);
        const std::uint32_t rows = read_u32(is);
        const std::uint32_t cols = read_u32(is);
        if (stored_name != name || rows != static_cast<std::uint32_t>(t.rows()) ||
            cols != static_cast<std::uint32_t>(t.cols())) {
            throw std::runtime_error("Backbone::load: tensor layout mismatch at " + name);
        }
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(double) * t.size()));
        ++seen;
    });
    if (!is || seen != tensor_count) {
        throw std::runtime_error("Backbone::load: truncated model file: " + path);
    }
    if (frozen) {
        b.frozen_ = true;
        b.checksum_ = stored_checksum;
        if (b.digest_now() != stored_checksum) {
            throw std::runtime_error("Backbone::load: checksum mismatch, model file corrupted: " +
                                     path);
        }
    }
    return b;
}

}  // namespace promptcl
