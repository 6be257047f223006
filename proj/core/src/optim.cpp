#include "fvlab/optim.hpp"

#include <cmath>

#include "fvlab/error.hpp"

namespace fvlab {

void AdamW::step(const std::vector<Tensor>& leaves) {
    ++t_;
    const real bc1 = real(1) - std::pow(cfg_.beta1, static_cast<real>(t_));
    const real bc2 = real(1) - std::pow(cfg_.beta2, static_cast<real>(t_));
    for (Tensor leaf : leaves) {
        if (!leaf.is_leaf()) fail(ErrorKind::contract, "optimizer step on non-leaf tensor");
        const auto* g = leaf.grad();
        if (!g) fail(ErrorKind::contract, "optimizer step on leaf without gradient");
        auto& mom = state_[leaf.id()];
        if (mom.m.empty()) {
            mom.m.assign(leaf.size(), real(0));
            mom.v.assign(leaf.size(), real(0));
        }
        auto p = leaf.mutable_data();
        for (size_t i = 0; i < p.size(); ++i) {
            const real gi = (*g)[i];
            mom.m[i] = cfg_.beta1 * mom.m[i] + (real(1) - cfg_.beta1) * gi;
            mom.v[i] = cfg_.beta2 * mom.v[i] + (real(1) - cfg_.beta2) * gi * gi;
            const real mhat = mom.m[i] / bc1;
            const real vhat = mom.v[i] / bc2;
            p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
        }
    }
}

void AdamW::reset() {
    t_ = 0;
    state_.clear();
}

}  // namespace fvlab
