#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fvlab/tensor.hpp"

namespace fvlab {

// Runs fn(0..n-1) on up to `threads` workers. Each index writes only its own
// slot, so results are identical to the serial order regardless of scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// indices of the k largest values, ties resolved toward the lower index
std::vector<int> top_k_indices(std::span<const real> values, int k);

}  // namespace fvlab
