#include "fvlab/model.hpp"

#include <cmath>
#include <string>

#include "fvlab/error.hpp"
#include "fvlab/ops.hpp"
#include "fvlab/optim.hpp"
#include "fvlab/rng.hpp"

namespace fvlab {

void ModelConfig::validate() const {
    if (n_layers < 2) fail(ErrorKind::config, "n_layers must be >= 2 (a layer must follow the intervention layer)");
    if (n_heads < 1 || d_head < 1) fail(ErrorKind::config, "n_heads and d_head must be positive");
    if (d_model != n_heads * d_head)
        fail(ErrorKind::config, "d_model (" + std::to_string(d_model) + ") must equal n_heads * d_head (" +
                                    std::to_string(n_heads * d_head) + ")");
    if (vocab_size <= 0) fail(ErrorKind::config, "vocab_size must be set");
    if (max_seq_len < 1) fail(ErrorKind::config, "max_seq_len must be positive");
}

namespace {

Tensor randn(Rng& rng, std::vector<int> shape, real std_dev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.mutable_data()) v = static_cast<real>(rng.normal()) * std_dev;
    return t;
}

}  // namespace

TransformerModel TransformerModel::init(const ModelConfig& cfg) {
    cfg.validate();
    TransformerModel m;
    m.cfg_ = cfg;
    Rng rng(mix_seed(cfg.seed, "weights"));
    const real w_std = real(0.02);
    const real res_std = w_std / std::sqrt(real(2 * cfg.n_layers));

    m.tok_emb_ = randn(rng, {cfg.vocab_size, cfg.d_model}, w_std);
    m.pos_emb_ = randn(rng, {cfg.max_seq_len, cfg.d_model}, real(0.01));
    m.lnf_g_ = Tensor::full({cfg.d_model}, real(1));
    m.lnf_b_ = Tensor::zeros({cfg.d_model});
    if (!cfg.tied_unembedding) m.unemb_ = randn(rng, {cfg.d_model, cfg.vocab_size}, w_std);

    m.layers_.resize(static_cast<size_t>(cfg.n_layers));
    for (auto& l : m.layers_) {
        for (int j = 0; j < cfg.n_heads; ++j) {
            l.wq.push_back(randn(rng, {cfg.d_model, cfg.d_head}, w_std));
            l.bq.push_back(Tensor::zeros({cfg.d_head}));
            l.wk.push_back(randn(rng, {cfg.d_model, cfg.d_head}, w_std));
            l.bk.push_back(Tensor::zeros({cfg.d_head}));
            l.wv.push_back(randn(rng, {cfg.d_model, cfg.d_head}, w_std));
            l.bv.push_back(Tensor::zeros({cfg.d_head}));
            l.wo.push_back(randn(rng, {cfg.d_head, cfg.d_model}, res_std));
        }
        l.bo = Tensor::zeros({cfg.d_model});
        l.ln1_g = Tensor::full({cfg.d_model}, real(1));
        l.ln1_b = Tensor::zeros({cfg.d_model});
        l.ln2_g = Tensor::full({cfg.d_model}, real(1));
        l.ln2_b = Tensor::zeros({cfg.d_model});
        l.w1 = randn(rng, {cfg.d_model, cfg.ff_dim()}, w_std);
        l.b1 = Tensor::zeros({cfg.ff_dim()});
        l.w2 = randn(rng, {cfg.ff_dim(), cfg.d_model}, res_std);
        l.b2 = Tensor::zeros({cfg.d_model});
    }
    return m;
}

std::vector<std::pair<std::string, Tensor>> TransformerModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("tok_emb", tok_emb_);
    out.emplace_back("pos_emb", pos_emb_);
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const auto& lay = layers_[static_cast<size_t>(l)];
        const std::string p = "l" + std::to_string(l) + ".";
        for (int j = 0; j < cfg_.n_heads; ++j) {
            const std::string h = p + "h" + std::to_string(j) + ".";
            out.emplace_back(h + "wq", lay.wq[static_cast<size_t>(j)]);
            out.emplace_back(h + "bq", lay.bq[static_cast<size_t>(j)]);
            out.emplace_back(h + "wk", lay.wk[static_cast<size_t>(j)]);
            out.emplace_back(h + "bk", lay.bk[static_cast<size_t>(j)]);
            out.emplace_back(h + "wv", lay.wv[static_cast<size_t>(j)]);
            out.emplace_back(h + "bv", lay.bv[static_cast<size_t>(j)]);
            out.emplace_back(h + "wo", lay.wo[static_cast<size_t>(j)]);
        }
        out.emplace_back(p + "bo", lay.bo);
        out.emplace_back(p + "ln1_g", lay.ln1_g);
        out.emplace_back(p + "ln1_b", lay.ln1_b);
        out.emplace_back(p + "ln2_g", lay.ln2_g);
        out.emplace_back(p + "ln2_b", lay.ln2_b);
        out.emplace_back(p + "w1", lay.w1);
        out.emplace_back(p + "b1", lay.b1);
        out.emplace_back(p + "w2", lay.w2);
        out.emplace_back(p + "b2", lay.b2);
    }
    out.emplace_back("lnf_g", lnf_g_);
    out.emplace_back("lnf_b", lnf_b_);
    if (!cfg_.tied_unembedding) out.emplace_back("unemb", unemb_);
    return out;
}

std::vector<Tensor> TransformerModel::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

void TransformerModel::freeze() {
    for (Tensor t : parameters()) t.set_leaf(false);
    frozen_ = true;
}

uint64_t TransformerModel::weight_digest() const {
    Digest d;
    for (const auto& [name, t] : named_parameters()) {
        d.update(name);
        for (int dim : t.shape()) d.update_value(dim);
        d.update(t.data().data(), t.size() * sizeof(real));
    }
    return d.value();
}

namespace {

void validate_interventions(const ModelConfig& cfg, int seq_len,
                            std::span<const InterventionSpec> interventions) {
    for (const auto& iv : interventions) {
        if (iv.layer < 0 || iv.layer >= cfg.n_layers)
            fail(ErrorKind::config, "intervention layer " + std::to_string(iv.layer) + " out of range");
        if (iv.scope == InterventionSpec::Scope::head && (iv.head < 0 || iv.head >= cfg.n_heads))
            fail(ErrorKind::config, "intervention head " + std::to_string(iv.head) + " out of range");
        if (!iv.vector.defined() || static_cast<int>(iv.vector.size()) != cfg.d_model)
            fail(ErrorKind::dimension, "intervention vector must have d_model elements");
        const int pos = iv.position < 0 ? seq_len - 1 : iv.position;
        if (pos < 0 || pos >= seq_len) fail(ErrorKind::config, "intervention position out of range");
    }
}

}  // namespace

Tensor TransformerModel::run_blocks(Tensor x, int start_layer, int seq_len,
                                    std::span<const InterventionSpec> interventions,
                                    const RecordSpec& record, ActivationRecord* rec, Tape* tape) const {
    const real inv_sqrt_dh = real(1) / std::sqrt(static_cast<real>(cfg_.d_head));
    for (int l = start_layer; l < cfg_.n_layers; ++l) {
        const auto& lay = layers_[static_cast<size_t>(l)];
        Tensor h = layer_norm(x, lay.ln1_g, lay.ln1_b, cfg_.ln_eps, tape);
        Tensor attn_sum;
        for (int j = 0; j < cfg_.n_heads; ++j) {
            const auto ju = static_cast<size_t>(j);
            Tensor q = add_row_broadcast(matmul(h, lay.wq[ju], tape), lay.bq[ju], tape);
            Tensor k = add_row_broadcast(matmul(h, lay.wk[ju], tape), lay.bk[ju], tape);
            Tensor v = add_row_broadcast(matmul(h, lay.wv[ju], tape), lay.bv[ju], tape);
            Tensor probs = causal_softmax(scale(matmul_nt(q, k, tape), inv_sqrt_dh, tape), tape);
            Tensor c = matmul(matmul(probs, v, tape), lay.wo[ju], tape);
            for (const auto& iv : interventions) {
                if (iv.layer != l || iv.scope != InterventionSpec::Scope::head || iv.head != j) continue;
                const int pos = iv.position < 0 ? seq_len - 1 : iv.position;
                c = iv.mode == InterventionSpec::Mode::add ? add_at_row(c, iv.vector, pos, tape)
                                                           : replace_row(c, iv.vector, pos, tape);
            }
            if (record.heads && rec) rec->head_contrib[static_cast<size_t>(l)][ju] = c.detached();
            attn_sum = attn_sum.defined() ? add(attn_sum, c, tape) : c;
        }
        x = add(x, add_row_broadcast(attn_sum, lay.bo, tape), tape);
        Tensor h2 = layer_norm(x, lay.ln2_g, lay.ln2_b, cfg_.ln_eps, tape);
        Tensor mlp = add_row_broadcast(
            matmul(gelu(add_row_broadcast(matmul(h2, lay.w1, tape), lay.b1, tape), tape), lay.w2, tape),
            lay.b2, tape);
        x = add(x, mlp, tape);
        for (const auto& iv : interventions) {
            if (iv.layer != l || iv.scope != InterventionSpec::Scope::residual) continue;
            const int pos = iv.position < 0 ? seq_len - 1 : iv.position;
            x = iv.mode == InterventionSpec::Mode::add ? add_at_row(x, iv.vector, pos, tape)
                                                       : replace_row(x, iv.vector, pos, tape);
        }
        if (record.hidden && rec) rec->hidden[static_cast<size_t>(l)] = x.detached();
    }
    return x;
}

Tensor TransformerModel::readout(const Tensor& x, Tape* tape) const {
    Tensor xf = layer_norm(x, lnf_g_, lnf_b_, cfg_.ln_eps, tape);
    return cfg_.tied_unembedding ? matmul_nt(xf, tok_emb_, tape) : matmul(xf, unemb_, tape);
}

ForwardResult TransformerModel::forward(std::span<const int> tokens,
                                        std::span<const InterventionSpec> interventions,
                                        const RecordSpec& record, Tape* tape) const {
    const int T = static_cast<int>(tokens.size());
    if (T == 0) fail(ErrorKind::contract, "forward on empty token sequence");
    if (T > cfg_.max_seq_len)
        fail(ErrorKind::contract, "sequence length " + std::to_string(T) + " exceeds max_seq_len " +
                                      std::to_string(cfg_.max_seq_len));
    for (int t : tokens)
        if (t < 0 || t >= cfg_.vocab_size) fail(ErrorKind::contract, "token id out of vocabulary");
    validate_interventions(cfg_, T, interventions);

    ForwardResult out;
    if (record.heads)
        out.record.head_contrib.assign(static_cast<size_t>(cfg_.n_layers),
                                       std::vector<Tensor>(static_cast<size_t>(cfg_.n_heads)));
    if (record.hidden) out.record.hidden.assign(static_cast<size_t>(cfg_.n_layers), Tensor());

    std::vector<int> ids(tokens.begin(), tokens.end());
    std::vector<int> pos_ids(static_cast<size_t>(T));
    for (int i = 0; i < T; ++i) pos_ids[static_cast<size_t>(i)] = i;
    Tensor x = add(embedding_rows(tok_emb_, ids, tape), embedding_rows(pos_emb_, pos_ids, tape), tape);
    x = run_blocks(x, 0, T, interventions, record, &out.record, tape);
    out.logits = readout(x, tape);
    return out;
}

Tensor TransformerModel::final_logits(std::span<const int> tokens,
                                      std::span<const InterventionSpec> interventions, Tape* tape) const {
    ForwardResult r = forward(tokens, interventions, {}, tape);
    return row(r.logits, static_cast<int>(tokens.size()) - 1, tape);
}

std::vector<real> TransformerModel::next_token_distribution(
    std::span<const int> tokens, std::span<const InterventionSpec> interventions) const {
    ForwardResult r = forward(tokens, interventions, {}, nullptr);
    Tensor probs = softmax_rows(row(r.logits, static_cast<int>(tokens.size()) - 1, nullptr), nullptr);
    return std::vector<real>(probs.data().begin(), probs.data().end());
}

std::vector<real> TransformerModel::decode_from_layer(std::span<const real> hidden, int start_layer) const {
    if (static_cast<int>(hidden.size()) != cfg_.d_model)
        fail(ErrorKind::dimension, "decode_from_layer expects a d_model state");
    if (start_layer < 0 || start_layer > cfg_.n_layers)
        fail(ErrorKind::config, "start_layer out of range");
    Tensor x = Tensor::from({1, cfg_.d_model}, std::vector<real>(hidden.begin(), hidden.end()));
    x = run_blocks(x, start_layer, 1, {}, {}, nullptr, nullptr);
    Tensor probs = softmax_rows(readout(x, nullptr), nullptr);
    return std::vector<real>(probs.data().begin(), probs.data().end());
}

PretrainResult pretrain(const Corpus& corpus, const ModelConfig& cfg, const PretrainSchedule& sched) {
    if (corpus.sequences.empty()) fail(ErrorKind::contract, "pretraining corpus is empty");
    TransformerModel model = TransformerModel::init(cfg);
    auto params = model.parameters();
    for (Tensor& p : params) p.set_leaf(true);

    // decoupled decay applies to matrices only; biases, gains and moments stay undecayed
    std::vector<Tensor> decayed, plain;
    for (const Tensor& p : params) (p.ndim() >= 2 ? decayed : plain).push_back(p);
    AdamW opt_decay({sched.lr, sched.beta1, sched.beta2, real(1e-8), sched.weight_decay});
    AdamW opt_plain({sched.lr, sched.beta1, sched.beta2, real(1e-8), real(0)});

    Rng order_rng(mix_seed(sched.seed, "batch-order"));
    const int n = static_cast<int>(corpus.sequences.size());
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    PretrainResult result;
    long step = 0;
    for (int epoch = 0; epoch < sched.epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0;
        int batches = 0;
        for (int begin = 0; begin < n; begin += sched.batch_size) {
            const int bsz = std::min(sched.batch_size, n - begin);
            for (Tensor& p : params) p.zero_grad();
            double batch_loss = 0;
            for (int b = 0; b < bsz; ++b) {
                const auto& seq = corpus.sequences[static_cast<size_t>(order[static_cast<size_t>(begin + b)])];
                Tape tape;
                ForwardResult r = model.forward(seq.tokens, {}, {}, &tape);
                Tensor loss = cross_entropy(r.logits, seq.targets, &tape);
                tape.backward(loss);
                batch_loss += static_cast<double>(loss.value());
            }
            batch_loss /= bsz;
            if (!std::isfinite(batch_loss))
                fail(ErrorKind::numeric, "pretraining diverged (non-finite loss) at epoch " + std::to_string(epoch));
            const real inv_b = real(1) / static_cast<real>(bsz);
            for (Tensor& p : params) {
                for (real& v : p.grad_buffer()) v *= inv_b;
            }
            ++step;
            const real warm = sched.warmup_steps > 0
                                  ? std::min(real(1), static_cast<real>(step) / static_cast<real>(sched.warmup_steps))
                                  : real(1);
            opt_decay.set_lr(sched.lr * warm);
            opt_plain.set_lr(sched.lr * warm);
            opt_decay.step(decayed);
            opt_plain.step(plain);
            epoch_loss += batch_loss;
            ++batches;
            if (sched.log_every > 0 && sched.progress && batches % sched.log_every == 0) {
                sched.progress(epoch, static_cast<int>(step), batch_loss);
            }
        }
        result.epoch_loss.push_back(epoch_loss / batches);
    }
    for (Tensor& p : params) {
        p.zero_grad();
        p.set_leaf(false);
    }
    model.freeze();
    result.final_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
    result.model = std::move(model);
    return result;
}

}  // namespace fvlab
