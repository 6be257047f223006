#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fvlab/dataset.hpp"
#include "fvlab/prompt.hpp"
#include "fvlab/vocab.hpp"

namespace fvlab {

// Desk-scale relation universe. A shared pool of stems appears under several
// relations (case mapping, reversal, pluralization, category naming, plus
// per-category relations), so a bare query word is ambiguous and the relation
// must be inferred from context. Auxiliary inverse-direction tasks give every
// derived token input-side occurrences in the corpus, which is what lets a
// tied-embedding model answer pairs held out of a relation's extract split.
struct SyntheticSpec {
    int adjective_stems = 100;  // even; consecutive stems form antonym pairs
    int ordinal_stems = 80;     // successor/predecessor run over this cycle
    int country_stems = 80;     // each country gets a capital word
    int noun_stems = 60;

    std::vector<std::string> generators = {
        "uppercase-map", "successor", "antonym-lookup", "plural-rule",
        "capital-lookup", "reverse-word", "word-class",
    };

    bool inverse_coverage = true;  // emit corpus-only inverse-direction tasks
    int corpus_sequences = 4000;
    int min_shots = 2;
    int max_shots = 10;
    bool lm_all_positions = false;  // false: loss only at demonstration answers

    SplitSpec split;  // governs which pairs may enter the corpus (extract only)
};

struct Corpus {
    struct Sequence {
        std::vector<int> tokens;
        std::vector<int> targets;  // target id per position, -1 = unscored
        std::string relation_id;
    };
    std::vector<Sequence> sequences;
};

struct SyntheticData {
    std::vector<RelationDataset> relations;           // the trained basis relations
    std::vector<RelationDataset> coverage_relations;  // corpus-only auxiliary tasks
    Vocabulary vocab;
    Corpus corpus;
};

SyntheticData generate_synthetic_relations(uint64_t seed, const SyntheticSpec& spec,
                                           const PromptTemplate& tmpl = {});

// true when the formatted demonstration "pair_fmt(x -> y)" occurs verbatim in
// any corpus sequence; the containment check for held-out splits
bool corpus_contains_pair(const Corpus& corpus, const Vocabulary& vocab,
                          const PromptTemplate& tmpl, const WordPair& pair);

// Within-relation four-term problems: source and target pairs drawn from the
// same relation's split, tag = relation id.
std::vector<AnalogyProblem> make_within_relation_analogies(std::span<const RelationDataset> splits,
                                                           int per_relation, uint64_t seed);

// Per relation, samples `pairs_per_side` source and target pairs and emits
// every source x target combination.
std::vector<AnalogyProblem> make_training_analogies(std::span<const RelationDataset> splits,
                                                    int pairs_per_side, uint64_t seed);

}  // namespace fvlab
