#include "fvlab/fv.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "fvlab/error.hpp"
#include "fvlab/rng.hpp"
#include "fvlab/util.hpp"

namespace fvlab {

using nlohmann::json;

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(threads));
    for (int w = 0; w < threads; ++w) {
        workers.emplace_back([&, w] {
            for (int i = w; i < n; i += threads) fn(i);
        });
    }
    for (auto& t : workers) t.join();
}

std::vector<int> top_k_indices(std::span<const real> values, int k) {
    if (k < 0 || k > static_cast<int>(values.size()))
        fail(ErrorKind::contract, "top_k_indices: k out of range");
    std::vector<int> idx(values.size());
    for (size_t i = 0; i < values.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return values[static_cast<size_t>(a)] > values[static_cast<size_t>(b)];
    });
    idx.resize(static_cast<size_t>(k));
    return idx;
}

std::span<const real> HeadMeanActivations::mean(int layer, int head) const {
    const size_t off =
        (static_cast<size_t>(layer) * static_cast<size_t>(n_heads) + static_cast<size_t>(head)) *
        static_cast<size_t>(d_model);
    return {means.data() + off, static_cast<size_t>(d_model)};
}

real CieTable::at(int layer, int head) const {
    return values[static_cast<size_t>(layer) * static_cast<size_t>(n_heads) + static_cast<size_t>(head)];
}

InterventionSpec FunctionVector::as_intervention(int position) const {
    InterventionSpec iv;
    iv.layer = layer;
    iv.position = position;
    iv.mode = InterventionSpec::Mode::add;
    iv.scope = InterventionSpec::Scope::residual;
    iv.vector = Tensor::from({static_cast<int>(vector.size())}, vector);
    return iv;
}

namespace {

// shots demonstrations plus one query pair, all distinct, from the split
std::vector<WordPair> sample_prompt_pairs(Rng& rng, const RelationDataset& split, int shots) {
    const int need = shots + 1;
    if (static_cast<int>(split.pairs.size()) < need)
        fail(ErrorKind::contract, "relation '" + split.relation_id + "' needs at least " +
                                      std::to_string(need) + " pairs for " + std::to_string(shots) +
                                      "-shot prompts");
    std::vector<WordPair> out;
    for (int idx : rng.sample_indices(static_cast<int>(split.pairs.size()), need))
        out.push_back(split.pairs[static_cast<size_t>(idx)]);
    return out;
}

int first_token(const Vocabulary& vocab, const std::string& word) {
    const std::vector<int> toks = vocab.tokenize(word);
    if (toks.empty()) fail(ErrorKind::data, "cannot tokenize answer word '" + word + "'");
    return toks[0];
}

}  // namespace

HeadMeanActivations mean_task_activations(const TransformerModel& model, const Vocabulary& vocab,
                                          const PromptTemplate& tmpl, const RelationDataset& extract_split,
                                          int n_prompts, int shots, uint64_t seed) {
    if (n_prompts < 1) fail(ErrorKind::contract, "mean_task_activations needs n_prompts >= 1");
    const auto& cfg = model.config();
    HeadMeanActivations out;
    out.relation_id = extract_split.relation_id;
    out.n_layers = cfg.n_layers;
    out.n_heads = cfg.n_heads;
    out.d_model = cfg.d_model;
    out.n_prompts = n_prompts;
    out.means.assign(static_cast<size_t>(cfg.n_layers) * cfg.n_heads * cfg.d_model, real(0));

    RecordSpec rec{.heads = true, .hidden = false};
    for (int i = 0; i < n_prompts; ++i) {
        Rng rng(mix_seed(seed, "mean:" + extract_split.relation_id, static_cast<uint64_t>(i)));
        std::vector<WordPair> pairs = sample_prompt_pairs(rng, extract_split, shots);
        const WordPair query = pairs.back();
        pairs.pop_back();
        Prompt p = build_icl_prompt(vocab, tmpl, pairs, query.input, {extract_split.relation_id, shots, false});
        ForwardResult r = model.forward(p.tokens, {}, rec);
        for (int l = 0; l < cfg.n_layers; ++l) {
            for (int j = 0; j < cfg.n_heads; ++j) {
                const Tensor& c = r.record.head_contrib[static_cast<size_t>(l)][static_cast<size_t>(j)];
                const size_t off =
                    (static_cast<size_t>(l) * cfg.n_heads + static_cast<size_t>(j)) * cfg.d_model;
                for (int d = 0; d < cfg.d_model; ++d) out.means[off + d] += c.at(p.answer_pos, d);
            }
        }
    }
    for (real& v : out.means) v /= static_cast<real>(n_prompts);
    return out;
}

CieTable compute_cie(const TransformerModel& model, const Vocabulary& vocab, const PromptTemplate& tmpl,
                     const RelationDataset& extract_split, const HeadMeanActivations& means,
                     int n_prompts, int shots, uint64_t seed, int threads) {
    if (means.relation_id != extract_split.relation_id)
        fail(ErrorKind::contract, "mean activations belong to relation '" + means.relation_id + "'");
    const auto& cfg = model.config();
    if (means.n_layers != cfg.n_layers || means.n_heads != cfg.n_heads || means.d_model != cfg.d_model)
        fail(ErrorKind::dimension, "mean activation dimensions do not match the model");

    CieTable out;
    out.relation_id = extract_split.relation_id;
    out.n_layers = cfg.n_layers;
    out.n_heads = cfg.n_heads;
    out.n_prompts = n_prompts;
    out.values.assign(static_cast<size_t>(cfg.n_layers) * cfg.n_heads, real(0));

    std::vector<std::vector<real>> per_prompt(static_cast<size_t>(n_prompts));
    parallel_for(n_prompts, threads, [&](int i) {
        Rng rng(mix_seed(seed, "cie:" + extract_split.relation_id, static_cast<uint64_t>(i)));
        std::vector<WordPair> pairs = sample_prompt_pairs(rng, extract_split, shots);
        const WordPair query = pairs.back();
        pairs.pop_back();
        const uint64_t shuffle_seed = mix_seed(seed, "cie-shuffle:" + extract_split.relation_id,
                                               static_cast<uint64_t>(i));
        Prompt p = build_shuffled_prompt(vocab, tmpl, pairs, query.input, shuffle_seed,
                                         {extract_split.relation_id, shots, true});
        const int gold = first_token(vocab, query.output);
        const std::vector<real> base = model.next_token_distribution(p.tokens);

        std::vector<real> cie(static_cast<size_t>(cfg.n_layers) * cfg.n_heads, real(0));
        for (int l = 0; l < cfg.n_layers; ++l) {
            for (int j = 0; j < cfg.n_heads; ++j) {
                InterventionSpec iv;
                iv.layer = l;
                iv.head = j;
                iv.position = p.answer_pos;
                iv.mode = InterventionSpec::Mode::replace;
                iv.scope = InterventionSpec::Scope::head;
                auto m = means.mean(l, j);
                iv.vector = Tensor::from({cfg.d_model}, std::vector<real>(m.begin(), m.end()));
                const std::vector<real> patched = model.next_token_distribution(p.tokens, {&iv, 1});
                cie[static_cast<size_t>(l) * cfg.n_heads + j] =
                    patched[static_cast<size_t>(gold)] - base[static_cast<size_t>(gold)];
            }
        }
        per_prompt[static_cast<size_t>(i)] = std::move(cie);
    });
    // fixed reduction order keeps the result bitwise deterministic
    for (const auto& cie : per_prompt) {
        for (size_t h = 0; h < out.values.size(); ++h) out.values[h] += cie[h];
    }
    for (real& v : out.values) v /= static_cast<real>(n_prompts);
    return out;
}

HeadSet select_top_heads(std::span<const CieTable> tables, int k) {
    if (tables.empty()) fail(ErrorKind::contract, "select_top_heads: no CIE tables");
    const int L = tables[0].n_layers, H = tables[0].n_heads;
    for (const auto& t : tables) {
        if (t.n_layers != L || t.n_heads != H)
            fail(ErrorKind::dimension, "select_top_heads: incongruent table shapes");
    }
    if (k < 1 || k > L * H)
        fail(ErrorKind::contract, "select_top_heads: k=" + std::to_string(k) + " exceeds head count");
    std::vector<real> avg(static_cast<size_t>(L) * H, real(0));
    for (const auto& t : tables)
        for (size_t i = 0; i < avg.size(); ++i) avg[i] += t.values[i];
    for (real& v : avg) v /= static_cast<real>(tables.size());

    // stable sort on descending mean CIE leaves ties in (layer, head) order
    const std::vector<int> order = top_k_indices(avg, k);
    HeadSet out;
    for (int idx : order) out.heads.push_back({idx / H, idx % H});
    return out;
}

FunctionVector build_function_vector(const HeadMeanActivations& means, const HeadSet& heads, int layer) {
    if (heads.heads.empty()) fail(ErrorKind::contract, "build_function_vector: empty head set");
    FunctionVector fv;
    fv.relation_id = means.relation_id;
    fv.layer = layer;
    fv.provenance = "initial";
    fv.heads = heads.heads;
    fv.vector.assign(static_cast<size_t>(means.d_model), real(0));
    for (const HeadRef& h : heads.heads) {
        if (h.layer < 0 || h.layer >= means.n_layers || h.head < 0 || h.head >= means.n_heads)
            fail(ErrorKind::contract, "head reference out of range");
        auto m = means.mean(h.layer, h.head);
        for (int d = 0; d < means.d_model; ++d) fv.vector[static_cast<size_t>(d)] += m[static_cast<size_t>(d)];
    }
    return fv;
}

FunctionVector actadd_vector(const TransformerModel& model, const Vocabulary& vocab,
                             const std::string& relation_id, const std::string& prompt_pos,
                             const std::string& prompt_neg, int layer, real coefficient) {
    RecordSpec rec{.heads = false, .hidden = true};
    auto hidden_at = [&](const std::string& prompt) {
        const std::vector<int> toks = vocab.tokenize(prompt);
        ForwardResult r = model.forward(toks, {}, rec);
        const Tensor& h = r.record.hidden[static_cast<size_t>(layer)];
        std::vector<real> out(static_cast<size_t>(model.config().d_model));
        for (int d = 0; d < model.config().d_model; ++d)
            out[static_cast<size_t>(d)] = h.at(static_cast<int>(toks.size()) - 1, d);
        return out;
    };
    FunctionVector fv;
    fv.relation_id = relation_id;
    fv.layer = layer;
    fv.provenance = "actadd";
    fv.vector = hidden_at(prompt_pos);
    if (!prompt_neg.empty()) {
        const std::vector<real> neg = hidden_at(prompt_neg);
        for (size_t d = 0; d < fv.vector.size(); ++d) fv.vector[d] -= neg[d];
    }
    for (real& v : fv.vector) v *= coefficient;
    fv.meta["prompt_pos"] = prompt_pos;
    if (!prompt_neg.empty()) fv.meta["prompt_neg"] = prompt_neg;
    return fv;
}

FunctionVector mean_center(const FunctionVector& v, std::span<const real> corpus_mean) {
    if (corpus_mean.size() != v.vector.size())
        fail(ErrorKind::dimension, "mean_center: corpus mean dimension mismatch");
    FunctionVector out = v;
    for (size_t d = 0; d < out.vector.size(); ++d) out.vector[d] -= corpus_mean[d];
    out.provenance = "mean-centered";
    return out;
}

std::vector<real> corpus_mean_hidden(const TransformerModel& model, const Vocabulary& vocab,
                                     const PromptTemplate& tmpl,
                                     std::span<const RelationDataset> extract_splits, int layer,
                                     int n_prompts, int shots, uint64_t seed) {
    if (extract_splits.empty()) fail(ErrorKind::contract, "corpus_mean_hidden: no relations");
    std::vector<real> mean(static_cast<size_t>(model.config().d_model), real(0));
    RecordSpec rec{.heads = false, .hidden = true};
    for (int i = 0; i < n_prompts; ++i) {
        const auto& split = extract_splits[static_cast<size_t>(i) % extract_splits.size()];
        Rng rng(mix_seed(seed, "corpus-mean:" + split.relation_id, static_cast<uint64_t>(i)));
        std::vector<WordPair> pairs = sample_prompt_pairs(rng, split, shots);
        const WordPair query = pairs.back();
        pairs.pop_back();
        Prompt p = build_icl_prompt(vocab, tmpl, pairs, query.input);
        ForwardResult r = model.forward(p.tokens, {}, rec);
        const Tensor& h = r.record.hidden[static_cast<size_t>(layer)];
        for (int d = 0; d < model.config().d_model; ++d) mean[static_cast<size_t>(d)] += h.at(p.answer_pos, d);
    }
    for (real& v : mean) v /= static_cast<real>(n_prompts);
    return mean;
}

void save_fv(const std::string& path, const FunctionVector& fv) {
    json j;
    j["relation"] = fv.relation_id;
    j["layer"] = fv.layer;
    j["provenance"] = fv.provenance;
    j["heads"] = json::array();
    for (const auto& h : fv.heads) j["heads"].push_back({h.layer, h.head});
    j["vector"] = fv.vector;
    j["meta"] = fv.meta;
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write function vector: " + path);
    out << j.dump(2) << "\n";
}

FunctionVector load_fv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::missing_artifact, "function vector file not found: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorKind::data, "malformed function vector file " + path + ": " + e.what());
    }
    FunctionVector fv;
    fv.relation_id = j.at("relation").get<std::string>();
    fv.layer = j.at("layer").get<int>();
    fv.provenance = j.at("provenance").get<std::string>();
    for (const auto& h : j.at("heads")) fv.heads.push_back({h.at(0).get<int>(), h.at(1).get<int>()});
    fv.vector = j.at("vector").get<std::vector<real>>();
    if (j.contains("meta")) fv.meta = j.at("meta").get<std::map<std::string, std::string>>();
    return fv;
}

}  // namespace fvlab
