#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fvlab/compose.hpp"
#include "fvlab/dataset.hpp"
#include "fvlab/fv.hpp"

namespace fvlab {

struct EvalItem {
    std::string prompt_digest;  // hex
    std::string gold;
    std::vector<std::string> topk;
    bool hit = false;
};

struct EvalReport {
    std::string task;       // shuffled-label | zero-shot | one-shot-analogy | rsa | decode
    std::string condition;  // baseline | initial-fv | ffv | cfv | actadd | mean-centered
    std::string relation_id;
    std::vector<EvalItem> items;
    double accuracy = 0;
    uint64_t seed = 0;
    std::string config_digest;

    void finalize();  // accuracy = mean of hit flags
};

void save_report(const std::string& path, const EvalReport& report);

// 10-shot prompts with deranged demonstration outputs; top-1 criterion
EvalReport eval_shuffled_label(const TransformerModel& model, const Vocabulary& vocab,
                               const PromptTemplate& tmpl, const RelationDataset& test_split,
                               const RelationDataset& demo_pool, const FunctionVector* intervention,
                               int shots, uint64_t seed, const std::string& condition);

// bare query prompts, optional vector injection; top-k criterion
EvalReport eval_zero_shot(const TransformerModel& model, const Vocabulary& vocab,
                          const PromptTemplate& tmpl, const RelationDataset& test_split,
                          const FunctionVector* intervention, int k, uint64_t seed,
                          const std::string& condition);

// textual one-shot prompt "a : b :: c :"
EvalReport eval_one_shot_analogy_baseline(const TransformerModel& model, const Vocabulary& vocab,
                                          const PromptTemplate& tmpl,
                                          std::span<const AnalogyProblem> problems, int k,
                                          uint64_t seed);

// composite-vector condition: source scoring, affine weights, injected target
EvalReport eval_one_shot_analogy_cfv(const TransformerModel& model, const Vocabulary& vocab,
                                     const PromptTemplate& tmpl, const BasisSet& basis,
                                     const AffineTransform& g, std::span<const AnalogyProblem> problems,
                                     int k, const CfvConfig& cfg, uint64_t seed,
                                     const std::string& condition = "cfv");

struct DissimilarityMatrix {
    std::vector<std::string> labels;
    std::vector<double> values;  // row-major square
    std::string metric = "1-cosine";

    int n() const { return static_cast<int>(labels.size()); }
    double at(int i, int j) const { return values[static_cast<size_t>(i) * labels.size() + j]; }
};

struct RsaResult {
    DissimilarityMatrix matrix;
    std::optional<double> pearson_r;  // vs. the human matrix, when provided
    std::optional<std::pair<double, double>> ci95;
    double within_mean = 0;   // mean dissimilarity among same-relation pairs
    double between_mean = 0;  // mean dissimilarity across relations
};

// Blank-pair prompts per word pair; representations are the concatenated
// per-head contributions at `record_layer` (the layer after the injection
// layer), final colon position. interventions may be empty (baseline) or give
// one vector per pair.
RsaResult rsa_similarity(const TransformerModel& model, const Vocabulary& vocab,
                         const PromptTemplate& tmpl, std::span<const WordPair> pairs,
                         std::span<const std::string> pair_relations,
                         std::span<const FunctionVector* const> interventions, int record_layer,
                         const HumanSimilarityMatrix* human);

// blank-prompt hidden state at the vector's layer plus the vector, decoded
// through the remaining layers
std::vector<std::pair<std::string, real>> decode_probe(const TransformerModel& model,
                                                       const Vocabulary& vocab,
                                                       const FunctionVector& fv, int k = 5);

// --- statistics helpers ------------------------------------------------------

// Pearson correlation over the strict upper triangles of two square matrices
double pearson_upper_triangle(std::span<const double> a, std::span<const double> b, int n);
// 95% confidence interval via the Fisher z-transform; m = number of samples
std::pair<double, double> fisher_ci95(double r, int m);

}  // namespace fvlab
