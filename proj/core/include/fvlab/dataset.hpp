#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fvlab {

struct WordPair {
    std::string input;
    std::string output;
    bool operator==(const WordPair&) const = default;
};

struct RelationDataset {
    std::string relation_id;
    std::string family;         // simple-task | complex-task | semeval | google | msr | synthetic
    std::string relation_type;  // populated for SemEval-style data
    std::vector<WordPair> pairs;
    std::vector<WordPair> paradigm_pairs;

    void validate() const;  // nonempty, no duplicate pairs, nonempty inputs
};

struct SplitSpec {
    double extract = 0.7;
    double finetune = 0.1;
    double test = 0.2;
    uint64_t seed = 0;
};

struct RelationSplits {
    RelationDataset extract;
    RelationDataset finetune;
    RelationDataset test;
};

// Deterministic disjoint split. The permutation is derived from the spec seed
// mixed with the relation id, so distinct relations split independently.
// SemEval-family datasets pin the finetune subset at exactly 10 pairs with a
// small test subset, mirroring the source data regime.
RelationSplits split_relation(const RelationDataset& ds, const SplitSpec& spec);

struct AnalogyProblem {
    std::string a, b, c, d;
    std::string tag;  // near | far | category label
};

struct HumanSimilarityMatrix {
    std::vector<std::string> labels;
    std::vector<double> values;  // row-major square, symmetrized
    std::string experiment_id;
    double max_asymmetry = 0.0;  // pre-symmetrization; caller may warn if > 1e-6

    int n() const { return static_cast<int>(labels.size()); }
    double at(int i, int j) const { return values[static_cast<size_t>(i) * labels.size() + j]; }
};

RelationDataset load_relation_file(const std::string& path);
std::vector<AnalogyProblem> load_analogy_file(const std::string& path);
HumanSimilarityMatrix load_human_similarity_matrix(const std::string& path);

void save_relation_file(const std::string& path, const RelationDataset& ds);
void save_analogy_file(const std::string& path, const std::vector<AnalogyProblem>& problems);
void save_similarity_matrix_csv(const std::string& path, const std::vector<std::string>& labels,
                                const std::vector<double>& values);

}  // namespace fvlab
