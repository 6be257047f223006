#include "fvlab/compose.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fvlab/error.hpp"
#include "fvlab/ops.hpp"
#include "fvlab/optim.hpp"
#include "fvlab/rng.hpp"
#include "fvlab/util.hpp"

namespace fvlab {

using nlohmann::json;

void BasisSet::validate(int d_model) const {
    if (vectors.size() < 2) fail(ErrorKind::contract, "basis needs at least 2 relations");
    for (const auto& v : vectors) {
        if (static_cast<int>(v.vector.size()) != d_model)
            fail(ErrorKind::dimension, "basis vector '" + v.relation_id + "' has wrong dimension");
        if (v.layer != layer)
            fail(ErrorKind::contract, "basis vector '" + v.relation_id + "' targets a different layer");
    }
}

std::vector<std::string> BasisSet::order() const {
    std::vector<std::string> out;
    for (const auto& v : vectors) out.push_back(v.relation_id);
    return out;
}

uint64_t BasisSet::digest() const {
    Digest d;
    for (const auto& v : vectors) {
        d.update(v.relation_id);
        d.update("\x1f");
    }
    d.update_value(layer);
    return d.value();
}

uint64_t AffineTransform::digest() const {
    Digest d;
    for (const auto& id : basis_order) {
        d.update(id);
        d.update("\x1f");
    }
    return d.value();
}

AffineTransform AffineTransform::identity(const BasisSet& basis) {
    AffineTransform g;
    g.basis_order = basis.order();
    const size_t z = g.basis_order.size();
    g.a.assign(z * z, real(0));
    for (size_t i = 0; i < z; ++i) g.a[i * z + i] = real(1);
    g.b.assign(z, real(0));
    return g;
}

FunctionVector CompositeFv::as_function_vector() const {
    FunctionVector fv;
    fv.relation_id = source.input + ":" + source.output;
    fv.vector = vector;
    fv.layer = layer;
    fv.provenance = "composite";
    return fv;
}

namespace {

int first_token(const Vocabulary& vocab, const std::string& word) {
    const std::vector<int> toks = vocab.tokenize(word);
    if (toks.empty()) fail(ErrorKind::data, "cannot tokenize word '" + word + "'");
    return toks[0];
}

uint64_t order_digest(const std::vector<std::string>& order) {
    Digest d;
    for (const auto& id : order) {
        d.update(id);
        d.update("\x1f");
    }
    return d.value();
}

}  // namespace

RelationScores relation_scores(const TransformerModel& model, const Vocabulary& vocab,
                               const PromptTemplate& tmpl, const BasisSet& basis,
                               const WordPair& source) {
    if (basis.vectors.empty()) fail(ErrorKind::contract, "relation_scores: empty basis");
    Prompt prompt = build_icl_prompt(vocab, tmpl, {}, source.input);
    const int gold = first_token(vocab, source.output);
    RelationScores out;
    out.basis = basis.order();
    out.basis_digest = order_digest(out.basis);
    out.scores.reserve(basis.vectors.size());
    for (const auto& fv : basis.vectors) {
        InterventionSpec iv = fv.as_intervention();
        const std::vector<real> p = model.next_token_distribution(prompt.tokens, {&iv, 1});
        out.scores.push_back(p[static_cast<size_t>(gold)]);
    }
    return out;
}

Posterior posterior(const RelationScores& scores, real temperature, bool log_scores) {
    if (scores.scores.empty()) fail(ErrorKind::contract, "posterior of empty scores");
    if (temperature <= real(0)) fail(ErrorKind::config, "temperature must be positive");
    std::vector<real> z = scores.scores;
    if (log_scores) {
        for (real& v : z) v = std::log(std::max(v, real(1e-12)));
    }
    real mx = z[0];
    for (real v : z) mx = std::max(mx, v);
    real total = 0;
    for (real& v : z) {
        v = std::exp((v - mx) / temperature);
        total += v;
    }
    Posterior out;
    out.basis_digest = scores.basis_digest;
    out.probs.reserve(z.size());
    for (real v : z) out.probs.push_back(v / total);
    return out;
}

std::vector<real> apply_affine(const AffineTransform& g, const Posterior& p) {
    const size_t z = g.basis_order.size();
    if (p.probs.size() != z) fail(ErrorKind::dimension, "posterior dimension does not match affine transform");
    if (p.basis_digest != g.digest())
        fail(ErrorKind::contract, "basis ordering digest mismatch between posterior and affine transform");
    std::vector<real> w(z, real(0));
    for (size_t i = 0; i < z; ++i) {
        real acc = g.b[i];
        for (size_t j = 0; j < z; ++j) acc += g.a[i * z + j] * p.probs[j];
        w[i] = acc;
    }
    return w;
}

CompositeFv compose(const BasisSet& basis, std::span<const real> weights, const WordPair& source) {
    if (static_cast<int>(weights.size()) != basis.size())
        fail(ErrorKind::dimension, "weight count does not match basis size");
    CompositeFv out;
    out.weights.assign(weights.begin(), weights.end());
    out.source = source;
    out.basis_digest = basis.digest();
    out.layer = basis.layer;
    const size_t d = basis.vectors[0].vector.size();
    out.vector.assign(d, real(0));
    for (int z = 0; z < basis.size(); ++z) {
        const auto& v = basis.at(z).vector;
        const real w = weights[static_cast<size_t>(z)];
        for (size_t i = 0; i < d; ++i) out.vector[i] += w * v[i];
    }
    return out;
}

AffineTransform train_affine(const TransformerModel& model, const Vocabulary& vocab,
                             const PromptTemplate& tmpl, const BasisSet& basis,
                             std::span<const AnalogyProblem> training, const CfvConfig& cfg,
                             AffineTrainTrace* trace) {
    basis.validate(model.config().d_model);
    if (training.empty()) fail(ErrorKind::contract, "train_affine: empty training set");
    const uint64_t digest_before = model.weight_digest();
    const int z = basis.size();

    AffineTransform init = AffineTransform::identity(basis);
    Tensor A = Tensor::from({z, z}, init.a);
    Tensor b = Tensor::from({z}, init.b);
    A.set_leaf(true);
    b.set_leaf(true);

    // the basis matrix is a constant; rows are the basis vectors
    std::vector<real> flat;
    flat.reserve(static_cast<size_t>(z) * basis.vectors[0].vector.size());
    for (const auto& v : basis.vectors) flat.insert(flat.end(), v.vector.begin(), v.vector.end());
    Tensor basis_matrix = Tensor::from({z, static_cast<int>(basis.vectors[0].vector.size())}, std::move(flat));

    AdamW opt({cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, real(0)});
    std::vector<Tensor> leaves = {A, b};

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0;
        for (const AnalogyProblem& problem : training) {
            AnalogyPrompt ap = build_analogy_prompt(vocab, tmpl, problem);
            // the scores are probabilities of a fixed model readout; they do
            // not depend on A or b, so the posterior enters as a constant
            const RelationScores scores = relation_scores(model, vocab, tmpl, basis, ap.source);
            const Posterior post = posterior(scores, cfg.temperature, cfg.log_scores);
            Tensor p = Tensor::from({z}, post.probs);

            Tape tape;
            Tensor w = add(matvec(A, p, &tape), b, &tape);
            Tensor v_c = vecmat(w, basis_matrix, &tape);
            InterventionSpec iv;
            iv.layer = basis.layer;
            iv.mode = InterventionSpec::Mode::add;
            iv.scope = InterventionSpec::Scope::residual;
            iv.vector = v_c;
            Tensor logits = model.final_logits(ap.target.tokens, {&iv, 1}, &tape);
            Tensor ce = cross_entropy(logits, {first_token(vocab, problem.d)}, &tape);
            Tensor loss = cfg.lambda != real(0)
                              ? add(ce, scale(l2_norm(v_c, &tape), cfg.lambda, &tape), &tape)
                              : ce;
            if (!std::isfinite(loss.value()))
                fail(ErrorKind::numeric, "non-finite loss during affine training");
            A.zero_grad();
            b.zero_grad();
            tape.backward(loss);
            opt.step(leaves);
            epoch_loss += static_cast<double>(loss.value());
        }
        if (trace) trace->epoch_loss.push_back(epoch_loss / static_cast<double>(training.size()));
    }

    if (model.weight_digest() != digest_before)
        fail(ErrorKind::contract, "model weights changed during affine training");

    AffineTransform out;
    out.basis_order = basis.order();
    out.a.assign(A.data().begin(), A.data().end());
    out.b.assign(b.data().begin(), b.data().end());
    return out;
}

AnalogySolution solve_analogy(const TransformerModel& model, const Vocabulary& vocab,
                              const PromptTemplate& tmpl, const BasisSet& basis,
                              const AffineTransform& g, const AnalogyProblem& problem, int k,
                              const CfvConfig& cfg) {
    if (g.digest() != order_digest(basis.order()))
        fail(ErrorKind::contract, "affine transform does not match the basis ordering");
    AnalogyPrompt ap = build_analogy_prompt(vocab, tmpl, problem);
    const RelationScores scores = relation_scores(model, vocab, tmpl, basis, ap.source);
    const Posterior post = posterior(scores, cfg.temperature, cfg.log_scores);
    const std::vector<real> w = apply_affine(g, post);

    AnalogySolution out;
    out.cfv = compose(basis, w, ap.source);
    InterventionSpec iv;
    iv.layer = basis.layer;
    iv.mode = InterventionSpec::Mode::add;
    iv.scope = InterventionSpec::Scope::residual;
    iv.vector = Tensor::from({static_cast<int>(out.cfv.vector.size())}, out.cfv.vector);
    const std::vector<real> dist = model.next_token_distribution(ap.target.tokens, {&iv, 1});
    out.topk_ids = top_k_indices(dist, std::min<int>(k, static_cast<int>(dist.size())));
    for (int id : out.topk_ids) out.topk.push_back(vocab.word(id));
    const int gold = first_token(vocab, problem.d);
    out.correct = std::find(out.topk_ids.begin(), out.topk_ids.end(), gold) != out.topk_ids.end();
    return out;
}

void save_affine(const std::string& path, const AffineTransform& g) {
    const size_t z = g.basis_order.size();
    json j;
    j["basis_order"] = g.basis_order;
    json rows = json::array();
    for (size_t i = 0; i < z; ++i) {
        json r = json::array();
        for (size_t c = 0; c < z; ++c) r.push_back(g.a[i * z + c]);
        rows.push_back(std::move(r));
    }
    j["A"] = std::move(rows);
    j["b"] = g.b;
    j["meta"] = json::object();
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write affine transform: " + path);
    out << j.dump(2) << "\n";
}

AffineTransform load_affine(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::missing_artifact, "affine transform file not found: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorKind::data, "malformed affine file " + path + ": " + e.what());
    }
    AffineTransform g;
    g.basis_order = j.at("basis_order").get<std::vector<std::string>>();
    const size_t z = g.basis_order.size();
    g.a.reserve(z * z);
    for (const auto& row : j.at("A")) {
        for (const auto& v : row) g.a.push_back(v.get<real>());
    }
    g.b = j.at("b").get<std::vector<real>>();
    if (g.a.size() != z * z || g.b.size() != z)
        fail(ErrorKind::data, "affine file " + path + " has inconsistent dimensions");
    return g;
}

}  // namespace fvlab
