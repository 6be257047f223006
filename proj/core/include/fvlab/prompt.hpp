#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fvlab/dataset.hpp"
#include "fvlab/vocab.hpp"

namespace fvlab {

struct PromptTemplate {
    std::string pair = "Q: {x}\nA: {y}\n\n";
    std::string query = "Q: {x}\nA:";
    std::string analogy = "{a} : {b} :: {c} :";
    std::string blank = "{a} : {b} ::  :";
};

struct PromptMeta {
    std::string relation_id;
    int shots = 0;
    bool shuffled = false;
};

struct Prompt {
    std::vector<int> tokens;
    int answer_pos = -1;  // index whose next-token distribution is scored
    PromptMeta meta;

    uint64_t digest() const;
};

// n >= 0 demonstrations followed by the query; answer position is the final
// token. n = 0 yields the bare zero-shot prompt.
Prompt build_icl_prompt(const Vocabulary& vocab, const PromptTemplate& tmpl,
                        std::span<const WordPair> demos, const std::string& query,
                        PromptMeta meta = {});

// Demonstration outputs are deranged (no output stays with its input) while
// inputs keep their order; deterministic under seed. Requires n >= 2.
Prompt build_shuffled_prompt(const Vocabulary& vocab, const PromptTemplate& tmpl,
                             std::span<const WordPair> demos, const std::string& query,
                             uint64_t seed, PromptMeta meta = {});

struct AnalogyPrompt {
    Prompt full;       // "a : b :: c :" textual one-shot form
    WordPair source;   // (a, b)
    Prompt target;     // zero-shot query prompt for c, used under vector injection
};

AnalogyPrompt build_analogy_prompt(const Vocabulary& vocab, const PromptTemplate& tmpl,
                                   const AnalogyProblem& problem);

// "x : y ::  :" with the final colon as the read-out position
Prompt build_blank_pair_prompt(const Vocabulary& vocab, const PromptTemplate& tmpl,
                               const WordPair& pair);

// substitutes {name} placeholders; used by the builders and the corpus writer
std::string substitute(std::string tmpl,
                       std::span<const std::pair<std::string, std::string>> values);

}  // namespace fvlab
