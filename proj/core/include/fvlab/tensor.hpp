#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace fvlab {

#ifdef FVLAB_REAL32
using real = float;
#else
using real = double;
#endif

// Dense row-major tensor with shared storage. Copies are shallow; detached()
// makes a deep, graph-free copy. Only tensors flagged as leaves accumulate
// gradients when a Tape replays.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, real value);
    static Tensor from(std::vector<int> shape, std::vector<real> values);
    static Tensor scalar(real value);

    bool defined() const noexcept { return s_ != nullptr; }
    const std::vector<int>& shape() const;
    int ndim() const;
    int dim(int i) const;
    // 2-D accessors; 1-D tensors behave as a single row
    int rows() const;
    int cols() const;
    size_t size() const;

    std::span<const real> data() const;
    std::span<real> mutable_data();
    real value() const;  // scalar tensors only
    real at(int i) const;
    real at(int i, int j) const;

    bool is_leaf() const;
    Tensor& set_leaf(bool leaf = true);

    // nullptr until a backward pass deposits into this leaf
    const std::vector<real>* grad() const;
    std::vector<real>& grad_buffer();  // allocates zeros on first use
    void zero_grad();
    void accumulate_grad(std::span<const real> g);

    Tensor detached() const;

    // storage identity (stable across shallow copies)
    const void* id() const noexcept { return s_.get(); }

private:
    struct Storage {
        std::vector<int> shape;
        std::vector<real> data;
        std::vector<real> grad;
        bool has_grad = false;
        bool leaf = false;
    };
    std::shared_ptr<Storage> s_;

    explicit Tensor(std::shared_ptr<Storage> s) : s_(std::move(s)) {}
    static Tensor make(std::vector<int> shape, std::vector<real> values);
};

// Wengert list: every primitive executed under a tape appends one node whose
// closure propagates adjoints from its output to its inputs. backward() walks
// the record in reverse (execution order is already topological) and finally
// deposits adjoints into the gradient buffers of leaf tensors only.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool empty() const noexcept { return nodes_.empty(); }
    size_t size() const noexcept { return nodes_.size(); }
    void reset();

    void backward(const Tensor& loss);

    // --- recording interface used by the primitives ---
    using BackFn = std::function<void(Tape&)>;
    void record(BackFn fn, std::initializer_list<Tensor> inputs);

    std::vector<real>& adjoint(const Tensor& t);
    const std::vector<real>* find_adjoint(const Tensor& t) const;

private:
    std::vector<BackFn> nodes_;
    std::unordered_map<const void*, std::vector<real>> adjoints_;
    std::vector<Tensor> leaves_;
    std::unordered_set<const void*> leaf_ids_;
};

}  // namespace fvlab
