// SPDX-License-Identifier: Apache-2.0
#include "promptcl/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "promptcl/digest.hpp"
#include "promptcl/optim.hpp"
#include "promptcl/rng.hpp"

namespace promptcl {
namespace {

constexpr char kBankMagic[4] = {'P', 'C', 'P', 'B'};
constexpr std::uint32_t kBankVersion = 1;

Vec sample_embedding_row(const Backbone& backbone, Rng& rng) {
    const int v = backbone.vocab().size();
    return backbone.embed_row(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(v))));
}

}  // namespace

std::string to_string(TaskType type) {
    switch (type) {
        case TaskType::ner: return "ner";
        case TaskType::classification: return "classification";
        case TaskType::summarization: return "summarization";
    }
    throw std::invalid_argument("to_string: invalid TaskType");
}

TaskType task_type_from_string(const std::string& name) {
    if (name == "ner") return TaskType::ner;
    if (name == "classification") return TaskType::classification;
    if (name == "summarization") return TaskType::summarization;
    throw std::invalid_argument("task_type_from_string: unknown task type '" + name + "'");
}

void PromptGrads::set_zero() {
    embeds.setZero();
    for (auto& [_, g] : gen) g.setZero();
}

bool PromptSnapshot::has_generation_token(const std::string& domain_id) const {
    return gen.count(domain_id) > 0;
}

Mat PromptSnapshot::gen_lead(const std::string& domain_id) const {
    auto it = gen.find(domain_id);
    if (it == gen.end()) {
        throw std::invalid_argument("PromptSnapshot::gen_lead: unregistered domain '" + domain_id +
                                    "'");
    }
    Mat lead(embeds.rows() + 1, embeds.cols());
    lead.row(0) = it->second.transpose();
    lead.bottomRows(embeds.rows()) = embeds;
    return lead;
}

std::vector<std::string> PromptSnapshot::domains() const {
    std::vector<std::string> out;
    out.reserve(gen.size());
    for (const auto& [id, _] : gen) out.push_back(id);
    return out;
}

TaskPrompt TaskPrompt::vocab_init(TaskType type, int n_p, const Backbone& backbone,
                                  std::uint64_t seed) {
    if (n_p < 1) throw std::invalid_argument("TaskPrompt::vocab_init: n_p must be >= 1");
    TaskPrompt p;
    p.type_ = type;
    p.embeds_.resize(n_p, backbone.dims().d_model);
    Rng rng(seed);
    for (int r = 0; r < n_p; ++r) p.embeds_.row(r) = sample_embedding_row(backbone, rng).transpose();
    return p;
}

TaskPrompt TaskPrompt::fkt_init(TaskType type, const TaskPrompt& prev) {
    TaskPrompt p;
    p.type_ = type;
    p.embeds_ = prev.embeds_;
    return p;
}

void TaskPrompt::add_generation_token(const std::string& domain_id, const Backbone& backbone,
                                      std::uint64_t seed) {
    if (frozen_) throw std::logic_error("TaskPrompt: cannot mutate a frozen prompt");
    if (gen_.count(domain_id) > 0) {
        throw std::invalid_argument("TaskPrompt::add_generation_token: domain '" + domain_id +
                                    "' already registered");
    }
    Rng rng(seed);
    gen_.emplace(domain_id, sample_embedding_row(backbone, rng));
}

bool TaskPrompt::has_generation_token(const std::string& domain_id) const {
    return gen_.count(domain_id) > 0;
}

const Vec& TaskPrompt::generation_token(const std::string& domain_id) const {
    auto it = gen_.find(domain_id);
    if (it == gen_.end()) {
        throw std::invalid_argument("TaskPrompt::generation_token: unregistered domain '" +
                                    domain_id + "'");
    }
    return it->second;
}

std::vector<std::string> TaskPrompt::domains() const {
    std::vector<std::string> out;
    out.reserve(gen_.size());
    for (const auto& [id, _] : gen_) out.push_back(id);
    return out;
}

std::uint64_t TaskPrompt::digest() const {
    Fnv1a h;
    h.update(to_string(type_));
    h.update(static_cast<std::uint64_t>(embeds_.rows()));
    h.update(embeds_);
    for (const auto& [id, g] : gen_) {
        h.update(id);
        h.update(g);
    }
    return h.value();
}

PromptGrads TaskPrompt::zero_grads() const {
    PromptGrads g;
    g.embeds = Mat::Zero(embeds_.rows(), embeds_.cols());
    for (const auto& [id, v] : gen_) g.gen.emplace(id, Vec::Zero(v.size()));
    return g;
}

Mat TaskPrompt::gen_lead(const std::string& domain_id) const {
    auto it = gen_.find(domain_id);
    if (it == gen_.end()) {
        throw std::invalid_argument("TaskPrompt::gen_lead: unregistered domain '" + domain_id +
                                    "'");
    }
    Mat lead(embeds_.rows() + 1, embeds_.cols());
    lead.row(0) = it->second.transpose();
    lead.bottomRows(embeds_.rows()) = embeds_;
    return lead;
}

PromptSnapshot TaskPrompt::snapshot() const {
    PromptSnapshot s;
    s.type = type_;
    s.embeds = embeds_;
    s.gen = gen_;
    return s;
}

void TaskPrompt::load_snapshot(const PromptSnapshot& snap) {
    if (frozen_) {
        throw std::logic_error("TaskPrompt::load_snapshot: prompt is frozen");
    }
    if (snap.type != type_ || snap.embeds.rows() != embeds_.rows() ||
        snap.embeds.cols() != embeds_.cols()) {
        throw std::invalid_argument("TaskPrompt::load_snapshot: layout mismatch");
    }
    for (const auto& [domain, vec] : snap.gen) {
        if (vec.size() != embeds_.cols()) {
            throw std::invalid_argument("TaskPrompt::load_snapshot: bad gen token size for '" +
                                        domain + "'");
        }
    }
    embeds_ = snap.embeds;
    gen_ = snap.gen;
    ++version_;
}

void TaskPrompt::accumulate_task_lead_grad(const Mat& dlead, PromptGrads& grads) const {
    if (dlead.rows() != embeds_.rows() || dlead.cols() != embeds_.cols()) {
        throw std::invalid_argument("TaskPrompt::accumulate_task_lead_grad: shape mismatch");
    }
    grads.embeds += dlead;
}

void TaskPrompt::accumulate_gen_lead_grad(const std::string& domain_id, const Mat& dlead,
                                          PromptGrads& grads) const {
    if (dlead.rows() != embeds_.rows() + 1 || dlead.cols() != embeds_.cols()) {
        throw std::invalid_argument("TaskPrompt::accumulate_gen_lead_grad: shape mismatch");
    }
    auto it = grads.gen.find(domain_id);
    if (it == grads.gen.end()) {
        throw std::invalid_argument("TaskPrompt::accumulate_gen_lead_grad: unregistered domain '" +
                                    domain_id + "'");
    }
    it->second += dlead.row(0).transpose();
    grads.embeds += dlead.bottomRows(embeds_.rows());
}

// --------------------------------------------------------------------------

PromptOptimizer::PromptOptimizer(const TaskPrompt& prompt, Config config)
    : config_(config), n_p_(prompt.n_p()), dim_(prompt.dim()), domain_layout_(prompt.domains()) {
    std::size_t n = static_cast<std::size_t>(n_p_) * static_cast<std::size_t>(dim_);
    n += domain_layout_.size() * static_cast<std::size_t>(dim_);
    v_.assign(n, 0.0);
}

void PromptOptimizer::step(TaskPrompt& prompt, PromptGrads& grads) {
    if (prompt.frozen()) throw std::logic_error("PromptOptimizer::step: prompt is frozen");
    if (prompt.n_p() != n_p_ || prompt.dim() != dim_ || prompt.domains() != domain_layout_) {
        throw std::logic_error("PromptOptimizer::step: prompt layout changed since construction");
    }
    if (grads.embeds.rows() != n_p_ || grads.embeds.cols() != dim_) {
        throw std::invalid_argument("PromptOptimizer::step: gradient shape mismatch");
    }

    std::vector<GradView> views;
    views.push_back({grads.embeds.data(), static_cast<std::size_t>(grads.embeds.size())});
    for (const auto& id : domain_layout_) {
        auto it = grads.gen.find(id);
        if (it == grads.gen.end()) {
            throw std::invalid_argument("PromptOptimizer::step: missing gradient for domain '" +
                                        id + "'");
        }
        views.push_back({it->second.data(), static_cast<std::size_t>(it->second.size())});
    }
    clip_global_norm(views, config_.clip_norm);

    ++steps_;
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    double lr = config_.lr;
    if (config_.decay_steps > 0) {
        const double frac =
            1.0 - static_cast<double>(steps_ - 1) / static_cast<double>(config_.decay_steps);
        lr *= std::max(config_.min_lr_frac, frac);
    }
    std::size_t off = 0;
    auto update = [&](double* p, const double* g, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            const double gi = g[i];
            v_[off + i] = config_.beta2 * v_[off + i] + (1.0 - config_.beta2) * gi * gi;
            const double vhat = v_[off + i] / bc2;
            p[i] -= lr * gi / (std::sqrt(vhat) + config_.eps);
        }
        off += n;
    };
    update(prompt.embeds_.data(), grads.embeds.data(),
           static_cast<std::size_t>(grads.embeds.size()));
    for (const auto& id : domain_layout_) {
        Vec& param = prompt.gen_.at(id);
        const Vec& grad = grads.gen.at(id);
        update(param.data(), grad.data(), static_cast<std::size_t>(param.size()));
    }
    ++prompt.version_;
}

// --------------------------------------------------------------------------
// prompt bank serialization

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_mat(std::ostream& os, const Mat& m) {
    write_u32(os, static_cast<std::uint32_t>(m.rows()));
    write_u32(os, static_cast<std::uint32_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * m.size()));
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
std::string read_string(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}
Mat read_mat(std::istream& is) {
    const std::uint32_t rows = read_u32(is);
    const std::uint32_t cols = read_u32(is);
    Mat m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    return m;
}

}  // namespace

void PromptBank::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("PromptBank::save: cannot open " + path);
    os.write(kBankMagic, sizeof(kBankMagic));
    write_u32(os, kBankVersion);
    write_u32(os, static_cast<std::uint32_t>(prompts.size()));
    for (const auto& [key, p] : prompts) {
        write_string(os, key);
        write_string(os, to_string(p.type()));
        os.put(p.frozen() ? 1 : 0);
        write_u64(os, p.version());
        write_mat(os, p.embeds());
        write_u32(os, static_cast<std::uint32_t>(p.gen_embeds().size()));
        for (const auto& [id, g] : p.gen_embeds()) {
            write_string(os, id);
            write_mat(os, Mat(g.transpose()));
        }
        write_u64(os, p.digest());
    }
    if (!os) throw std::runtime_error("PromptBank::save: write failed for " + path);
}

PromptBank PromptBank::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("PromptBank::load: cannot open " + path);
    char magic[4];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kBankMagic, sizeof(kBankMagic)) != 0) {
        throw std::runtime_error("PromptBank::load: not a prompt bank file: " + path);
    }
    if (read_u32(is) != kBankVersion) {
        throw std::runtime_error("PromptBank::load: unsupported file version in " + path);
    }
    PromptBank bank;
    const std::uint32_t count = read_u32(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string key = read_string(is);
        TaskPrompt p;
        p.type_ = task_type_from_string(read_string(is));
        p.frozen_ = is.get() == 1;
        p.version_ = read_u64(is);
        p.embeds_ = read_mat(is);
        const std::uint32_t n_gen = read_u32(is);
        for (std::uint32_t g = 0; g < n_gen; ++g) {
            const std::string id = read_string(is);
            Mat row = read_mat(is);
            p.gen_.emplace(id, Vec(row.transpose()));
        }
        const std::uint64_t stored = read_u64(is);
        if (!is) throw std::runtime_error("PromptBank::load: truncated file: " + path);
        if (p.digest() != stored) {
            throw std::runtime_error("PromptBank::load: digest mismatch for prompt '" + key +
                                     "', file corrupted: " + path);
        }
        bank.prompts.emplace(key, std::move(p));
    }
    return bank;
}

}  // namespace promptcl
