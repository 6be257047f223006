#pragma once

#include <map>
#include <string>
#include <vector>

#include "fvlab/fv.hpp"

namespace fvlab {

struct FineTuneConfig {
    real lr = real(0.01);
    int epochs = 50;
    real lambda = real(0.01);  // weight on the Euclidean norm of the vector
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real eps = real(1e-8);
    uint64_t seed = 0;
    enum class Init { from_fv, random };
    Init init = Init::from_fv;
    // early stop once the epoch loss improves by less than min_delta for
    // `patience` consecutive epochs; patience <= 0 trains all epochs
    int patience = 5;
    real min_delta = real(1e-4);
};

struct FineTuneTrace {
    std::vector<double> loss;         // one entry per pair step
    std::vector<double> grad_norm;
    std::vector<double> vector_norm;
    std::vector<double> epoch_loss;   // mean loss per epoch
    int epochs_run = 0;
};

struct LossValue {
    real loss = 0;
    real ce = 0;
    real reg = 0;
    std::vector<real> grad;  // d loss / d vector
};

// Cross-entropy of the gold first token under the zero-shot prompt with the
// vector injected, plus lambda * ||v||. Gradient flows only to the vector.
LossValue loss_lz(const TransformerModel& model, const Vocabulary& vocab, const PromptTemplate& tmpl,
                  const FunctionVector& v, const WordPair& pair, real lambda);

struct FineTuneResult {
    FunctionVector vector;  // provenance "fine-tuned"
    FineTuneTrace trace;
};

FineTuneResult finetune_fv(const TransformerModel& model, const Vocabulary& vocab,
                           const PromptTemplate& tmpl, const FunctionVector& v_init,
                           const RelationDataset& finetune_split, const FineTuneConfig& cfg);

struct BatchFineTuneEntry {
    bool ok = false;
    std::string error;
    FineTuneResult result;
};

// Gradients of distinct vectors are independent, so per-relation runs are
// exact and can proceed in parallel; a failing relation is reported in its
// entry without aborting the others.
std::map<std::string, BatchFineTuneEntry> batch_finetune_all(
    const TransformerModel& model, const Vocabulary& vocab, const PromptTemplate& tmpl,
    const std::map<std::string, FunctionVector>& initial,
    const std::map<std::string, RelationDataset>& finetune_splits, const FineTuneConfig& cfg,
    int threads = 1);

}  // namespace fvlab
