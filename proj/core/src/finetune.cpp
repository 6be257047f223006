#include "fvlab/finetune.hpp"

#include <cmath>

#include "fvlab/error.hpp"
#include "fvlab/ops.hpp"
#include "fvlab/optim.hpp"
#include "fvlab/rng.hpp"
#include "fvlab/util.hpp"

namespace fvlab {

namespace {

int first_token(const Vocabulary& vocab, const std::string& word) {
    const std::vector<int> toks = vocab.tokenize(word);
    if (toks.empty()) fail(ErrorKind::data, "cannot tokenize answer word '" + word + "'");
    return toks[0];
}

struct StepOutcome {
    real loss, ce, reg;
};

// one injected forward + backward; gradients land in vec.grad
StepOutcome vector_loss_step(const TransformerModel& model, const Vocabulary& vocab,
                             const PromptTemplate& tmpl, Tensor& vec, int layer,
                             const WordPair& pair, real lambda) {
    Prompt prompt = build_icl_prompt(vocab, tmpl, {}, pair.input);
    const int gold = first_token(vocab, pair.output);

    Tape tape;
    InterventionSpec iv;
    iv.layer = layer;
    iv.mode = InterventionSpec::Mode::add;
    iv.scope = InterventionSpec::Scope::residual;
    iv.vector = vec;
    Tensor logits = model.final_logits(prompt.tokens, {&iv, 1}, &tape);
    Tensor ce = cross_entropy(logits, {gold}, &tape);
    Tensor loss = lambda != real(0) ? add(ce, scale(l2_norm(vec, &tape), lambda, &tape), &tape) : ce;
    if (!std::isfinite(loss.value()))
        fail(ErrorKind::numeric, "non-finite loss while fine-tuning '" + pair.input + "'");
    tape.backward(loss);
    return {loss.value(), ce.value(), loss.value() - ce.value()};
}

}  // namespace

LossValue loss_lz(const TransformerModel& model, const Vocabulary& vocab, const PromptTemplate& tmpl,
                  const FunctionVector& v, const WordPair& pair, real lambda) {
    if (static_cast<int>(v.vector.size()) != model.config().d_model)
        fail(ErrorKind::dimension, "function vector dimension does not match the model");
    Tensor vec = Tensor::from({static_cast<int>(v.vector.size())}, v.vector);
    vec.set_leaf(true);
    const StepOutcome s = vector_loss_step(model, vocab, tmpl, vec, v.layer, pair, lambda);
    LossValue out;
    out.loss = s.loss;
    out.ce = s.ce;
    out.reg = s.reg;
    const auto* g = vec.grad();
    out.grad = g ? *g : std::vector<real>(v.vector.size(), real(0));
    return out;
}

FineTuneResult finetune_fv(const TransformerModel& model, const Vocabulary& vocab,
                           const PromptTemplate& tmpl, const FunctionVector& v_init,
                           const RelationDataset& finetune_split, const FineTuneConfig& cfg) {
    if (finetune_split.pairs.empty())
        fail(ErrorKind::contract, "empty finetune split for relation '" + finetune_split.relation_id + "'");
    if (cfg.epochs < 1) fail(ErrorKind::config, "finetune epochs must be >= 1");
    if (static_cast<int>(v_init.vector.size()) != model.config().d_model)
        fail(ErrorKind::dimension, "initial vector dimension does not match the model");

    const uint64_t digest_before = model.weight_digest();

    Tensor vec;
    if (cfg.init == FineTuneConfig::Init::from_fv) {
        vec = Tensor::from({static_cast<int>(v_init.vector.size())}, v_init.vector);
    } else {
        // random control, scaled to the initial vector's norm
        Rng rng(mix_seed(cfg.seed, "ffv-random-init:" + v_init.relation_id));
        std::vector<real> vals(v_init.vector.size());
        real ss = 0;
        for (auto& x : vals) {
            x = static_cast<real>(rng.normal());
            ss += x * x;
        }
        real target = 0;
        for (real x : v_init.vector) target += x * x;
        const real s = ss > 0 ? std::sqrt(target / ss) : real(0);
        for (auto& x : vals) x *= s;
        vec = Tensor::from({static_cast<int>(vals.size())}, std::move(vals));
    }
    vec.set_leaf(true);

    AdamW opt({cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, real(0)});
    std::vector<Tensor> leaves = {vec};

    FineTuneResult out;
    out.trace.epochs_run = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    int stall = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0;
        for (const WordPair& pair : finetune_split.pairs) {
            vec.zero_grad();
            const StepOutcome s = vector_loss_step(model, vocab, tmpl, vec, v_init.layer, pair, cfg.lambda);
            real gn = 0;
            for (real g : *vec.grad()) gn += g * g;
            real vn = 0;
            for (real x : vec.data()) vn += x * x;
            out.trace.loss.push_back(s.loss);
            out.trace.grad_norm.push_back(std::sqrt(gn));
            out.trace.vector_norm.push_back(std::sqrt(vn));
            opt.step(leaves);
            epoch_loss += s.loss;
        }
        epoch_loss /= static_cast<double>(finetune_split.pairs.size());
        out.trace.epoch_loss.push_back(epoch_loss);
        ++out.trace.epochs_run;
        if (cfg.patience > 0) {
            if (epoch_loss < best_loss - cfg.min_delta) {
                best_loss = epoch_loss;
                stall = 0;
            } else if (++stall >= cfg.patience) {
                break;
            }
        } else if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
        }
    }

    if (model.weight_digest() != digest_before)
        fail(ErrorKind::contract, "model weights changed during fine-tuning");

    out.vector = v_init;
    out.vector.vector.assign(vec.data().begin(), vec.data().end());
    out.vector.provenance = "fine-tuned";
    out.vector.meta["init"] = cfg.init == FineTuneConfig::Init::from_fv ? "from-initial-fv" : "random";
    out.vector.meta["epochs_run"] = std::to_string(out.trace.epochs_run);
    return out;
}

std::map<std::string, BatchFineTuneEntry> batch_finetune_all(
    const TransformerModel& model, const Vocabulary& vocab, const PromptTemplate& tmpl,
    const std::map<std::string, FunctionVector>& initial,
    const std::map<std::string, RelationDataset>& finetune_splits, const FineTuneConfig& cfg,
    int threads) {
    std::vector<std::string> ids;
    for (const auto& [id, fv] : initial) ids.push_back(id);
    std::vector<BatchFineTuneEntry> entries(ids.size());
    parallel_for(static_cast<int>(ids.size()), threads, [&](int i) {
        const std::string& id = ids[static_cast<size_t>(i)];
        auto& entry = entries[static_cast<size_t>(i)];
        try {
            auto split = finetune_splits.find(id);
            if (split == finetune_splits.end())
                fail(ErrorKind::contract, "no finetune split for relation '" + id + "'");
            entry.result = finetune_fv(model, vocab, tmpl, initial.at(id), split->second, cfg);
            entry.ok = true;
        } catch (const std::exception& e) {
            entry.ok = false;
            entry.error = e.what();
        }
    });
    std::map<std::string, BatchFineTuneEntry> out;
    for (size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], std::move(entries[i]));
    return out;
}

}  // namespace fvlab
