#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fvlab/compose.hpp"
#include "fvlab/eval.hpp"
#include "fvlab/finetune.hpp"
#include "fvlab/fv.hpp"
#include "fvlab/model.hpp"
#include "fvlab/synthetic.hpp"

namespace fvlab {

inline constexpr const char* kToolVersion = "fvlab 0.1.0";

struct ExtractionConfig {
    int shots = 10;
    int mean_prompts = 32;
    int cie_prompts = 32;
    int top_k = 10;
    int layer = -1;  // -1 resolves to n_layers / 2
    real actadd_coefficient = real(5);
};

struct EvalSelection {
    std::vector<std::string> conditions = {"baseline",    "initial-fv", "ffv",
                                           "cfv",         "actadd",     "mean-centered"};
    int topk = 5;
    int shuffled_shots = 10;
    int analogies_per_relation = 12;
    int rsa_pairs_per_relation = 4;
};

struct RunConfig {
    uint64_t seed = 1;
    int seeds = 1;  // independent sampling seeds for extraction/finetune/eval
    std::string out = "runs/default";
    int threads = 0;  // 0 = hardware concurrency

    ModelConfig model;
    SyntheticSpec data;
    PromptTemplate prompt;
    PretrainSchedule pretrain;
    ExtractionConfig extract;
    FineTuneConfig finetune;
    CfvConfig cfv;
    EvalSelection eval;

    int cfv_train_pairs = 5;  // per relation, source and target sides each
    std::string analogy_file;       // optional external analogy problems
    std::string human_matrix_file;  // optional human dissimilarity CSV

    int injection_layer() const { return extract.layer >= 0 ? extract.layer : model.n_layers / 2; }

    static RunConfig defaults();
    static RunConfig from_file(const std::string& path);
    std::string to_json_string() const;
    // digest over everything that shapes artifact content (output dir excluded)
    std::string digest() const;
};

// deterministic regeneration of the data universe a run is built on
struct PipelineData {
    SyntheticData data;
    std::map<std::string, RelationSplits> splits;  // keyed by relation id
    std::vector<std::string> relation_order;
};

PipelineData build_pipeline_data(const RunConfig& cfg);

uint64_t per_seed_seed(const RunConfig& cfg, int seed_index);

// --- per-seed extraction over all relations ---------------------------------

struct ExtractionArtifacts {
    std::map<std::string, HeadMeanActivations> means;
    std::map<std::string, CieTable> cie;
    HeadSet heads;  // shared across relations (cross-relation CIE average)
    std::map<std::string, FunctionVector> initial;
};

ExtractionArtifacts extract_all(const TransformerModel& model, const Vocabulary& vocab,
                                const PromptTemplate& tmpl, const PipelineData& pd,
                                const ExtractionConfig& cfg, int injection_layer, uint64_t seed,
                                int threads);

// intact n-shot accuracy: demonstrations from the demo pool, query held out
double icl_accuracy(const TransformerModel& model, const Vocabulary& vocab,
                    const PromptTemplate& tmpl, const RelationDataset& queries,
                    const RelationDataset& demo_pool, int shots, int max_items, uint64_t seed);

// --- commands (exit code 0 on success; errors are thrown) --------------------

void cmd_pretrain(const RunConfig& cfg);
void cmd_extract(const RunConfig& cfg);
void cmd_finetune(const RunConfig& cfg);
void cmd_cfv_train(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_rsa(const RunConfig& cfg);
void cmd_decode(const RunConfig& cfg);
void cmd_layer_sweep(const RunConfig& cfg, int layer_lo = 0, int layer_hi = -1);
void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_path);

int exit_code_for(const std::exception& e);

// manifest: relative artifact path -> content hash, plus the issuing command
struct Manifest {
    std::string tool_version;
    std::string config_digest;
    std::map<std::string, std::pair<std::string, std::string>> entries;  // path -> (hash, command)

    static Manifest load_or_create(const std::string& out_dir, const std::string& config_digest);
    void add(const std::string& out_dir, const std::string& relative_path, const std::string& command);
    void save(const std::string& out_dir) const;
};

uint64_t file_hash(const std::string& path);

}  // namespace fvlab
