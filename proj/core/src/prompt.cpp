#include "fvlab/prompt.hpp"

#include <algorithm>

#include "fvlab/error.hpp"
#include "fvlab/rng.hpp"

namespace fvlab {

uint64_t Prompt::digest() const {
    Digest d;
    for (int t : tokens) d.update_value(t);
    d.update_value(answer_pos);
    return d.value();
}

std::string substitute(std::string tmpl,
                       std::span<const std::pair<std::string, std::string>> values) {
    for (const auto& [name, value] : values) {
        const std::string key = "{" + name + "}";
        size_t pos = 0;
        while ((pos = tmpl.find(key, pos)) != std::string::npos) {
            tmpl.replace(pos, key.size(), value);
            pos += value.size();
        }
    }
    return tmpl;
}

namespace {

void append_pair(std::vector<int>& tokens, const Vocabulary& vocab, const PromptTemplate& tmpl,
                 const WordPair& p) {
    // tokenize with a sentinel in the {y} slot so the answer token is located
    // structurally, independent of the template text
    const std::pair<std::string, std::string> subs[] = {{"x", p.input}, {"y", Vocabulary::kSlot}};
    std::vector<int> toks = vocab.tokenize(substitute(tmpl.pair, subs));
    const int y_id = vocab.id(p.output);
    for (int& t : toks) {
        if (t == vocab.slot_id()) t = y_id;
    }
    tokens.insert(tokens.end(), toks.begin(), toks.end());
}

void append_query(std::vector<int>& tokens, const Vocabulary& vocab, const PromptTemplate& tmpl,
                  const std::string& query) {
    const std::pair<std::string, std::string> subs[] = {{"x", query}};
    std::vector<int> toks = vocab.tokenize(substitute(tmpl.query, subs));
    tokens.insert(tokens.end(), toks.begin(), toks.end());
}

}  // namespace

Prompt build_icl_prompt(const Vocabulary& vocab, const PromptTemplate& tmpl,
                        std::span<const WordPair> demos, const std::string& query,
                        PromptMeta meta) {
    Prompt p;
    for (const auto& d : demos) append_pair(p.tokens, vocab, tmpl, d);
    append_query(p.tokens, vocab, tmpl, query);
    p.answer_pos = static_cast<int>(p.tokens.size()) - 1;
    meta.shots = static_cast<int>(demos.size());
    p.meta = std::move(meta);
    return p;
}

Prompt build_shuffled_prompt(const Vocabulary& vocab, const PromptTemplate& tmpl,
                             std::span<const WordPair> demos, const std::string& query,
                             uint64_t seed, PromptMeta meta) {
    const int n = static_cast<int>(demos.size());
    if (n < 2) fail(ErrorKind::contract, "shuffled prompt needs at least 2 demonstrations");
    // Sattolo's algorithm yields a uniform cyclic permutation: every output is
    // displaced, so no demonstration stays correct.
    std::vector<int> perm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const int j = rng.uniform_int(0, i - 1);
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }
    std::vector<WordPair> shuffled(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        shuffled[static_cast<size_t>(i)] = {demos[static_cast<size_t>(i)].input,
                                            demos[static_cast<size_t>(perm[static_cast<size_t>(i)])].output};
    }
    meta.shuffled = true;
    return build_icl_prompt(vocab, tmpl, shuffled, query, std::move(meta));
}

AnalogyPrompt build_analogy_prompt(const Vocabulary& vocab, const PromptTemplate& tmpl,
                                   const AnalogyProblem& problem) {
    if (problem.a.empty() || problem.b.empty() || problem.c.empty())
        fail(ErrorKind::data, "analogy problem has empty terms");
    AnalogyPrompt out;
    const std::pair<std::string, std::string> subs[] = {
        {"a", problem.a}, {"b", problem.b}, {"c", problem.c}};
    out.full.tokens = vocab.tokenize(substitute(tmpl.analogy, subs));
    out.full.answer_pos = static_cast<int>(out.full.tokens.size()) - 1;
    out.full.meta.relation_id = problem.tag;
    out.full.meta.shots = 1;
    out.source = {problem.a, problem.b};
    out.target = build_icl_prompt(vocab, tmpl, {}, problem.c, {problem.tag, 0, false});
    return out;
}

Prompt build_blank_pair_prompt(const Vocabulary& vocab, const PromptTemplate& tmpl,
                               const WordPair& pair) {
    Prompt p;
    const std::pair<std::string, std::string> subs[] = {{"a", pair.input}, {"b", pair.output}};
    p.tokens = vocab.tokenize(substitute(tmpl.blank, subs));
    p.answer_pos = static_cast<int>(p.tokens.size()) - 1;  // the final colon
    return p;
}

}  // namespace fvlab
