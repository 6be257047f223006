#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fvlab/synthetic.hpp"
#include "fvlab/tensor.hpp"

namespace fvlab {

struct ModelConfig {
    int n_layers = 4;
    int n_heads = 4;
    int d_model = 128;
    int d_head = 32;
    int d_ff = 0;  // 0 -> 4 * d_model
    int vocab_size = 0;
    int max_seq_len = 128;
    uint64_t seed = 1;
    bool tied_unembedding = true;
    real ln_eps = real(1e-5);

    int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
    void validate() const;
};

struct InterventionSpec {
    enum class Mode { add, replace };
    enum class Scope { residual, head };

    int layer = -1;
    int position = -1;  // -1 selects the final prompt token
    Mode mode = Mode::add;
    Scope scope = Scope::residual;
    int head = -1;       // required for head scope
    Tensor vector;       // d_model; head-scope vectors live in residual space
                         // (per-head contributions are taken post output projection)
};

struct RecordSpec {
    bool heads = false;   // per-head residual-space contributions, all layers/positions
    bool hidden = false;  // per-layer hidden states (post block, post intervention)
};

struct ActivationRecord {
    std::vector<std::vector<Tensor>> head_contrib;  // [layer][head] -> [T, d_model], detached
    std::vector<Tensor> hidden;                     // [layer] -> [T, d_model], detached
};

struct ForwardResult {
    Tensor logits;  // [T, vocab]
    ActivationRecord record;
};

class TransformerModel {
public:
    TransformerModel() = default;

    static TransformerModel init(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    bool frozen() const { return frozen_; }
    void freeze();
    uint64_t weight_digest() const;

    // every weight tensor, in a fixed order (shared handles, not copies)
    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;

    ForwardResult forward(std::span<const int> tokens,
                          std::span<const InterventionSpec> interventions = {},
                          const RecordSpec& record = {}, Tape* tape = nullptr) const;

    // convenience: logits row at the final position, differentiable under tape
    Tensor final_logits(std::span<const int> tokens,
                        std::span<const InterventionSpec> interventions, Tape* tape) const;

    std::vector<real> next_token_distribution(std::span<const int> tokens,
                                              std::span<const InterventionSpec> interventions = {}) const;

    // continues a single d_model state through layers [start_layer, n_layers)
    // then the final norm and unembedding; start_layer == n_layers decodes the
    // state directly
    std::vector<real> decode_from_layer(std::span<const real> hidden, int start_layer) const;

private:
    struct Layer {
        std::vector<Tensor> wq, bq, wk, bk, wv, bv, wo;  // per head
        Tensor bo;
        Tensor ln1_g, ln1_b, ln2_g, ln2_b;
        Tensor w1, b1, w2, b2;
    };

    ModelConfig cfg_;
    Tensor tok_emb_, pos_emb_, lnf_g_, lnf_b_, unemb_;
    std::vector<Layer> layers_;
    bool frozen_ = false;

    Tensor run_blocks(Tensor x, int start_layer, int seq_len,
                      std::span<const InterventionSpec> interventions,
                      const RecordSpec& record, ActivationRecord* rec, Tape* tape) const;
    Tensor readout(const Tensor& x, Tape* tape) const;
};

// --- pretraining -----------------------------------------------------------

struct PretrainSchedule {
    int epochs = 3;
    int batch_size = 8;
    real lr = real(3e-3);
    real weight_decay = real(0.02);
    int warmup_steps = 100;
    real beta1 = real(0.9);
    real beta2 = real(0.99);
    uint64_t seed = 1;
    int log_every = 0;  // batches between progress callbacks; 0 disables
    std::function<void(int epoch, int step, double loss)> progress;
};

struct PretrainResult {
    TransformerModel model;  // frozen
    std::vector<double> epoch_loss;
    double final_loss = 0;
};

PretrainResult pretrain(const Corpus& corpus, const ModelConfig& cfg, const PretrainSchedule& sched);

// --- checkpoint io ----------------------------------------------------------

void save_checkpoint(const std::string& path, const TransformerModel& model, const Vocabulary& vocab);
std::pair<TransformerModel, Vocabulary> load_checkpoint(const std::string& path);

}  // namespace fvlab
