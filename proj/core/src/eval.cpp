#include "fvlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fvlab/error.hpp"
#include "fvlab/rng.hpp"
#include "fvlab/util.hpp"

namespace fvlab {

using nlohmann::json;

void EvalReport::finalize() {
    if (items.empty()) {
        accuracy = 0;
        return;
    }
    double hits = 0;
    for (const auto& it : items) hits += it.hit ? 1 : 0;
    accuracy = hits / static_cast<double>(items.size());
}

void save_report(const std::string& path, const EvalReport& report) {
    json j;
    j["task"] = report.task;
    j["condition"] = report.condition;
    if (!report.relation_id.empty()) j["relation"] = report.relation_id;
    j["accuracy"] = report.accuracy;
    j["seed"] = report.seed;
    j["config_digest"] = report.config_digest;
    j["items"] = json::array();
    for (const auto& it : report.items) {
        j["items"].push_back({{"prompt_digest", it.prompt_digest},
                              {"gold", it.gold},
                              {"topk", it.topk},
                              {"hit", it.hit}});
    }
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write report: " + path);
    out << j.dump(2) << "\n";
}

namespace {

int first_token(const Vocabulary& vocab, const std::string& word) {
    const std::vector<int> toks = vocab.tokenize(word);
    if (toks.empty()) fail(ErrorKind::data, "cannot tokenize word '" + word + "'");
    return toks[0];
}

EvalItem score_prompt(const TransformerModel& model, const Vocabulary& vocab, const Prompt& prompt,
                      const FunctionVector* intervention, const std::string& gold, int k) {
    std::vector<InterventionSpec> ivs;
    if (intervention) ivs.push_back(intervention->as_intervention());
    const std::vector<real> dist = model.next_token_distribution(prompt.tokens, ivs);
    EvalItem item;
    item.prompt_digest = to_hex(prompt.digest());
    item.gold = gold;
    const int gold_id = first_token(vocab, gold);
    for (int id : top_k_indices(dist, std::min<int>(k, static_cast<int>(dist.size())))) {
        item.topk.push_back(vocab.word(id));
        if (id == gold_id) item.hit = true;
    }
    return item;
}

std::vector<WordPair> sample_demos(Rng& rng, const RelationDataset& pool, int shots,
                                   const WordPair& exclude) {
    std::vector<const WordPair*> candidates;
    for (const auto& p : pool.pairs) {
        if (p.input != exclude.input) candidates.push_back(&p);
    }
    if (static_cast<int>(candidates.size()) < shots)
        fail(ErrorKind::contract, "relation '" + pool.relation_id + "' cannot supply " +
                                      std::to_string(shots) + " demonstrations");
    std::vector<WordPair> out;
    for (int idx : rng.sample_indices(static_cast<int>(candidates.size()), shots))
        out.push_back(*candidates[static_cast<size_t>(idx)]);
    return out;
}

}  // namespace

EvalReport eval_shuffled_label(const TransformerModel& model, const Vocabulary& vocab,
                               const PromptTemplate& tmpl, const RelationDataset& test_split,
                               const RelationDataset& demo_pool, const FunctionVector* intervention,
                               int shots, uint64_t seed, const std::string& condition) {
    if (test_split.pairs.empty()) fail(ErrorKind::contract, "empty test split");
    EvalReport report;
    report.task = "shuffled-label";
    report.condition = condition;
    report.relation_id = test_split.relation_id;
    report.seed = seed;
    for (size_t i = 0; i < test_split.pairs.size(); ++i) {
        const WordPair& q = test_split.pairs[i];
        Rng rng(mix_seed(seed, "shuffled-demos:" + test_split.relation_id, static_cast<uint64_t>(i)));
        const std::vector<WordPair> demos = sample_demos(rng, demo_pool, shots, q);
        const uint64_t shuffle_seed =
            mix_seed(seed, "shuffled-perm:" + test_split.relation_id, static_cast<uint64_t>(i));
        Prompt prompt = build_shuffled_prompt(vocab, tmpl, demos, q.input, shuffle_seed,
                                              {test_split.relation_id, shots, true});
        report.items.push_back(score_prompt(model, vocab, prompt, intervention, q.output, 1));
    }
    report.finalize();
    return report;
}

EvalReport eval_zero_shot(const TransformerModel& model, const Vocabulary& vocab,
                          const PromptTemplate& tmpl, const RelationDataset& test_split,
                          const FunctionVector* intervention, int k, uint64_t seed,
                          const std::string& condition) {
    if (test_split.pairs.empty()) fail(ErrorKind::contract, "empty test split");
    EvalReport report;
    report.task = "zero-shot";
    report.condition = condition;
    report.relation_id = test_split.relation_id;
    report.seed = seed;
    for (const WordPair& q : test_split.pairs) {
        Prompt prompt = build_icl_prompt(vocab, tmpl, {}, q.input, {test_split.relation_id, 0, false});
        report.items.push_back(score_prompt(model, vocab, prompt, intervention, q.output, k));
    }
    report.finalize();
    return report;
}

EvalReport eval_one_shot_analogy_baseline(const TransformerModel& model, const Vocabulary& vocab,
                                          const PromptTemplate& tmpl,
                                          std::span<const AnalogyProblem> problems, int k,
                                          uint64_t seed) {
    if (problems.empty()) fail(ErrorKind::contract, "no analogy problems");
    EvalReport report;
    report.task = "one-shot-analogy";
    report.condition = "baseline";
    report.seed = seed;
    for (const AnalogyProblem& problem : problems) {
        AnalogyPrompt ap = build_analogy_prompt(vocab, tmpl, problem);
        report.items.push_back(score_prompt(model, vocab, ap.full, nullptr, problem.d, k));
    }
    report.finalize();
    return report;
}

EvalReport eval_one_shot_analogy_cfv(const TransformerModel& model, const Vocabulary& vocab,
                                     const PromptTemplate& tmpl, const BasisSet& basis,
                                     const AffineTransform& g, std::span<const AnalogyProblem> problems,
                                     int k, const CfvConfig& cfg, uint64_t seed,
                                     const std::string& condition) {
    if (problems.empty()) fail(ErrorKind::contract, "no analogy problems");
    EvalReport report;
    report.task = "one-shot-analogy";
    report.condition = condition;
    report.seed = seed;
    for (const AnalogyProblem& problem : problems) {
        AnalogySolution sol = solve_analogy(model, vocab, tmpl, basis, g, problem, k, cfg);
        EvalItem item;
        AnalogyPrompt ap = build_analogy_prompt(vocab, tmpl, problem);
        item.prompt_digest = to_hex(ap.target.digest());
        item.gold = problem.d;
        item.topk = sol.topk;
        item.hit = sol.correct;
        report.items.push_back(std::move(item));
    }
    report.finalize();
    return report;
}

RsaResult rsa_similarity(const TransformerModel& model, const Vocabulary& vocab,
                         const PromptTemplate& tmpl, std::span<const WordPair> pairs,
                         std::span<const std::string> pair_relations,
                         std::span<const FunctionVector* const> interventions, int record_layer,
                         const HumanSimilarityMatrix* human) {
    const int n = static_cast<int>(pairs.size());
    if (n < 2) fail(ErrorKind::contract, "rsa needs at least 2 word pairs");
    if (!interventions.empty() && static_cast<int>(interventions.size()) != n)
        fail(ErrorKind::dimension, "one intervention per pair expected");
    if (!pair_relations.empty() && static_cast<int>(pair_relations.size()) != n)
        fail(ErrorKind::dimension, "one relation label per pair expected");
    const auto& cfg = model.config();
    if (record_layer < 0 || record_layer >= cfg.n_layers)
        fail(ErrorKind::config, "rsa record layer out of range");

    // representation: concatenated per-head contributions at the final colon
    const int width = cfg.n_heads * cfg.d_model;
    std::vector<double> reps(static_cast<size_t>(n) * width);
    RecordSpec rec{.heads = true, .hidden = false};
    for (int i = 0; i < n; ++i) {
        Prompt prompt = build_blank_pair_prompt(vocab, tmpl, pairs[static_cast<size_t>(i)]);
        std::vector<InterventionSpec> ivs;
        if (!interventions.empty() && interventions[static_cast<size_t>(i)])
            ivs.push_back(interventions[static_cast<size_t>(i)]->as_intervention());
        ForwardResult r = model.forward(prompt.tokens, ivs, rec);
        for (int j = 0; j < cfg.n_heads; ++j) {
            const Tensor& c = r.record.head_contrib[static_cast<size_t>(record_layer)][static_cast<size_t>(j)];
            for (int d = 0; d < cfg.d_model; ++d) {
                reps[static_cast<size_t>(i) * width + static_cast<size_t>(j) * cfg.d_model + d] =
                    static_cast<double>(c.at(prompt.answer_pos, d));
            }
        }
    }

    RsaResult out;
    out.matrix.labels.reserve(static_cast<size_t>(n));
    for (const auto& p : pairs) out.matrix.labels.push_back(p.input + ":" + p.output);
    out.matrix.values.assign(static_cast<size_t>(n) * n, 0.0);
    auto dot = [&](int i, int j) {
        double acc = 0;
        for (int d = 0; d < width; ++d)
            acc += reps[static_cast<size_t>(i) * width + d] * reps[static_cast<size_t>(j) * width + d];
        return acc;
    };
    std::vector<double> norms(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) norms[static_cast<size_t>(i)] = std::sqrt(dot(i, i));
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double denom = norms[static_cast<size_t>(i)] * norms[static_cast<size_t>(j)];
            const double cos = denom > 0 ? dot(i, j) / denom : 0.0;
            const double dis = 1.0 - cos;
            out.matrix.values[static_cast<size_t>(i) * n + j] = dis;
            out.matrix.values[static_cast<size_t>(j) * n + i] = dis;
        }
    }

    if (!pair_relations.empty()) {
        double within = 0, between = 0;
        int nw = 0, nb = 0;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const double d = out.matrix.at(i, j);
                if (pair_relations[static_cast<size_t>(i)] == pair_relations[static_cast<size_t>(j)]) {
                    within += d;
                    ++nw;
                } else {
                    between += d;
                    ++nb;
                }
            }
        }
        out.within_mean = nw ? within / nw : 0.0;
        out.between_mean = nb ? between / nb : 0.0;
    }

    if (human) {
        if (human->n() != n) fail(ErrorKind::contract, "human matrix size does not match pair count");
        for (int i = 0; i < n; ++i) {
            if (human->labels[static_cast<size_t>(i)] != out.matrix.labels[static_cast<size_t>(i)])
                fail(ErrorKind::contract, "human matrix label '" + human->labels[static_cast<size_t>(i)] +
                                              "' does not align with pair '" +
                                              out.matrix.labels[static_cast<size_t>(i)] + "'");
        }
        const double r = pearson_upper_triangle(out.matrix.values, human->values, n);
        out.pearson_r = r;
        out.ci95 = fisher_ci95(r, n * (n - 1) / 2);
    }
    return out;
}

std::vector<std::pair<std::string, real>> decode_probe(const TransformerModel& model,
                                                       const Vocabulary& vocab,
                                                       const FunctionVector& fv, int k) {
    if (static_cast<int>(fv.vector.size()) != model.config().d_model)
        fail(ErrorKind::dimension, "function vector dimension does not match the model");
    const std::vector<int> blank = vocab.tokenize("Q: A:");
    RecordSpec rec{.heads = false, .hidden = true};
    ForwardResult r = model.forward(blank, {}, rec);
    const Tensor& h = r.record.hidden[static_cast<size_t>(fv.layer)];
    std::vector<real> state(static_cast<size_t>(model.config().d_model));
    for (int d = 0; d < model.config().d_model; ++d)
        state[static_cast<size_t>(d)] = h.at(static_cast<int>(blank.size()) - 1, d) + fv.vector[static_cast<size_t>(d)];
    const std::vector<real> dist = model.decode_from_layer(state, fv.layer + 1);
    std::vector<std::pair<std::string, real>> out;
    for (int id : top_k_indices(dist, std::min<int>(k, static_cast<int>(dist.size()))))
        out.emplace_back(vocab.word(id), dist[static_cast<size_t>(id)]);
    return out;
}

double pearson_upper_triangle(std::span<const double> a, std::span<const double> b, int n) {
    if (a.size() != b.size() || static_cast<int>(a.size()) != n * n)
        fail(ErrorKind::dimension, "pearson_upper_triangle expects two n*n matrices");
    std::vector<double> xs, ys;
    xs.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    ys.reserve(xs.capacity());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            xs.push_back(a[static_cast<size_t>(i) * n + j]);
            ys.push_back(b[static_cast<size_t>(i) * n + j]);
        }
    }
    const double m = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= m;
    my /= m;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::pair<double, double> fisher_ci95(double r, int m) {
    if (m <= 3 || std::abs(r) >= 1.0 - 1e-15) return {r, r};
    const double z = std::atanh(r);
    const double se = 1.0 / std::sqrt(static_cast<double>(m - 3));
    return {std::tanh(z - 1.959963984540054 * se), std::tanh(z + 1.959963984540054 * se)};
}

}  // namespace fvlab
