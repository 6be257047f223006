#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "fvlab/dataset.hpp"
#include "fvlab/model.hpp"
#include "fvlab/prompt.hpp"

namespace fvlab {

struct HeadRef {
    int layer = 0;
    int head = 0;
    auto operator<=>(const HeadRef&) const = default;
};

// Mean per-head residual-space contributions at the answer position,
// averaged over intact n-shot prompts.
struct HeadMeanActivations {
    std::string relation_id;
    int n_layers = 0, n_heads = 0, d_model = 0;
    std::vector<real> means;  // [layer][head][d_model]
    int n_prompts = 0;

    std::span<const real> mean(int layer, int head) const;
};

// Mean causal indirect effect per head: the gain in gold-token probability
// when the head's activation in a shuffled prompt is replaced by its mean
// task activation.
struct CieTable {
    std::string relation_id;
    int n_layers = 0, n_heads = 0;
    std::vector<real> values;  // [layer][head]
    int n_prompts = 0;

    real at(int layer, int head) const;
};

struct HeadSet {
    std::vector<HeadRef> heads;  // distinct, in selection order
};

struct FunctionVector {
    std::string relation_id;
    std::vector<real> vector;  // d_model
    int layer = -1;            // injection layer
    std::vector<HeadRef> heads;
    std::string provenance;  // initial | fine-tuned | composite | actadd | mean-centered
    std::map<std::string, std::string> meta;

    // add-mode residual-stream injection at the final prompt token
    InterventionSpec as_intervention(int position = -1) const;
};

HeadMeanActivations mean_task_activations(const TransformerModel& model, const Vocabulary& vocab,
                                          const PromptTemplate& tmpl, const RelationDataset& extract_split,
                                          int n_prompts, int shots, uint64_t seed);

CieTable compute_cie(const TransformerModel& model, const Vocabulary& vocab, const PromptTemplate& tmpl,
                     const RelationDataset& extract_split, const HeadMeanActivations& means,
                     int n_prompts, int shots, uint64_t seed, int threads = 1);

// top-k heads by mean CIE averaged across the given tables; ties break by
// (layer, head) order
HeadSet select_top_heads(std::span<const CieTable> tables, int k = 10);

// sum of the selected heads' mean activations
FunctionVector build_function_vector(const HeadMeanActivations& means, const HeadSet& heads, int layer);

// steering baseline: coefficient * hidden(prompt_pos) [- hidden(prompt_neg)]
// taken from the residual stream at `layer`, final token
FunctionVector actadd_vector(const TransformerModel& model, const Vocabulary& vocab,
                             const std::string& relation_id, const std::string& prompt_pos,
                             const std::string& prompt_neg, int layer, real coefficient);

FunctionVector mean_center(const FunctionVector& v, std::span<const real> corpus_mean);

// mean layer-l final-token hidden state over a broad sample of intact prompts
std::vector<real> corpus_mean_hidden(const TransformerModel& model, const Vocabulary& vocab,
                                     const PromptTemplate& tmpl,
                                     std::span<const RelationDataset> extract_splits, int layer,
                                     int n_prompts, int shots, uint64_t seed);

void save_fv(const std::string& path, const FunctionVector& fv);
FunctionVector load_fv(const std::string& path);

}  // namespace fvlab
