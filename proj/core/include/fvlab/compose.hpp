#pragma once

#include <span>
#include <string>
#include <vector>

#include "fvlab/fv.hpp"

namespace fvlab {

// Ordered set of fine-tuned basis vectors. The ordering digest guards every
// downstream artifact against basis mismatches.
struct BasisSet {
    std::vector<FunctionVector> vectors;
    int layer = -1;

    void validate(int d_model) const;
    std::vector<std::string> order() const;
    uint64_t digest() const;
    const FunctionVector& at(int i) const { return vectors[static_cast<size_t>(i)]; }
    int size() const { return static_cast<int>(vectors.size()); }
};

struct RelationScores {
    std::vector<std::string> basis;
    std::vector<real> scores;  // P(r | q, z) per basis relation, in [0,1]
    uint64_t basis_digest = 0;
};

struct Posterior {
    std::vector<real> probs;  // P(z | q, r), sums to 1
    uint64_t basis_digest = 0;
};

struct AffineTransform {
    std::vector<std::string> basis_order;
    std::vector<real> a;  // row-major |Z| x |Z|
    std::vector<real> b;  // |Z|

    uint64_t digest() const;
    static AffineTransform identity(const BasisSet& basis);
};

struct CompositeFv {
    std::vector<real> vector;
    std::vector<real> weights;
    WordPair source;
    uint64_t basis_digest = 0;
    int layer = -1;

    FunctionVector as_function_vector() const;  // provenance "composite"
};

struct CfvConfig {
    real temperature = real(1);
    bool log_scores = false;  // softmax over log-probabilities instead of raw
    real lr = real(0.01);
    real lambda = real(0.01);
    int epochs = 10;
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real eps = real(1e-8);
    uint64_t seed = 0;
};

// probability of the source output's first token under the injected zero-shot
// prompt, for every basis relation
RelationScores relation_scores(const TransformerModel& model, const Vocabulary& vocab,
                               const PromptTemplate& tmpl, const BasisSet& basis,
                               const WordPair& source);

Posterior posterior(const RelationScores& scores, real temperature = real(1), bool log_scores = false);

// w = A p + b; weights may be negative
std::vector<real> apply_affine(const AffineTransform& g, const Posterior& p);

CompositeFv compose(const BasisSet& basis, std::span<const real> weights, const WordPair& source);

struct AffineTrainTrace {
    std::vector<double> epoch_loss;
};

// Optimizes A and b on analogy problems through the injected forward pass;
// the model and all basis vectors stay fixed.
AffineTransform train_affine(const TransformerModel& model, const Vocabulary& vocab,
                             const PromptTemplate& tmpl, const BasisSet& basis,
                             std::span<const AnalogyProblem> training, const CfvConfig& cfg,
                             AffineTrainTrace* trace = nullptr);

struct AnalogySolution {
    CompositeFv cfv;
    std::vector<int> topk_ids;
    std::vector<std::string> topk;
    bool correct = false;
};

AnalogySolution solve_analogy(const TransformerModel& model, const Vocabulary& vocab,
                              const PromptTemplate& tmpl, const BasisSet& basis,
                              const AffineTransform& g, const AnalogyProblem& problem, int k = 5,
                              const CfvConfig& cfg = {});

void save_affine(const std::string& path, const AffineTransform& g);
AffineTransform load_affine(const std::string& path);

}  // namespace fvlab
