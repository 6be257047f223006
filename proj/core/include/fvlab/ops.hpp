#pragma once

#include <vector>

#include "fvlab/tensor.hpp"

namespace fvlab {

// Differentiable primitives. Every op computes eagerly; when `tape` is
// non-null it also records the adjoint rule. Shape violations raise a
// dimension error naming the offending shapes.

// [n,k] @ [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
// [n,k] @ [m,k]^T -> [n,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

// elementwise, identical shapes
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
// [n,m] + [m] broadcast over rows
Tensor add_row_broadcast(const Tensor& a, const Tensor& bias, Tape* tape = nullptr);
Tensor scale(const Tensor& a, real c, Tape* tape = nullptr);

Tensor gelu(const Tensor& a, Tape* tape = nullptr);

// row-wise layer normalization with learned gain/bias over the last dim
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps,
                  Tape* tape = nullptr);

Tensor softmax_rows(const Tensor& a, Tape* tape = nullptr);
// softmax over columns j <= i of each row i; strictly-upper entries are 0
Tensor causal_softmax(const Tensor& scores, Tape* tape = nullptr);

// gathers rows of `table` ([v,d]) at `ids` -> [len(ids), d]
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids, Tape* tape = nullptr);

// selects row i -> [1,m]
Tensor row(const Tensor& a, int i, Tape* tape = nullptr);
// copy of a with v ([m] or [1,m]) added to row i
Tensor add_at_row(const Tensor& a, const Tensor& v, int i, Tape* tape = nullptr);
// copy of a with row i replaced by v
Tensor replace_row(const Tensor& a, const Tensor& v, int i, Tape* tape = nullptr);

// mean cross-entropy from raw logits [n,v]; targets[i] in [0,v) or -1 to skip.
// Uses the log-sum-exp formulation. Returns a scalar.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, Tape* tape = nullptr);

// Euclidean norm, scalar output; gradient defined as 0 at the origin
Tensor l2_norm(const Tensor& a, Tape* tape = nullptr);

// [n,m] @ [m] -> [n]
Tensor matvec(const Tensor& a, const Tensor& x, Tape* tape = nullptr);
// [n] with basis matrix [n,d] -> weighted row combination [d]
Tensor vecmat(const Tensor& w, const Tensor& basis, Tape* tape = nullptr);

}  // namespace fvlab
