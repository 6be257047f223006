#pragma once

#include <unordered_map>
#include <vector>

#include "fvlab/tensor.hpp"

namespace fvlab {

struct AdamWConfig {
    real lr = real(0.01);
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real eps = real(1e-8);
    real weight_decay = real(0);
};

// Adaptive moment estimation with decoupled weight decay. Moment buffers are
// keyed by tensor identity and persist across steps; reset() clears them.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    const AdamWConfig& config() const noexcept { return cfg_; }
    void set_lr(real lr) { cfg_.lr = lr; }

    // One update over the given leaves. Every leaf must carry a gradient.
    void step(const std::vector<Tensor>& leaves);
    void reset();

private:
    struct Moments {
        std::vector<real> m, v;
    };
    AdamWConfig cfg_;
    long t_ = 0;
    std::unordered_map<const void*, Moments> state_;
};

}  // namespace fvlab
