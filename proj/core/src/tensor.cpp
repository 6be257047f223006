#include "fvlab/tensor.hpp"

#include <string>

#include "fvlab/error.hpp"

namespace fvlab {

namespace {

size_t shape_size(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) fail(ErrorKind::dimension, "tensor dimension must be positive, got " + std::to_string(d));
        n *= static_cast<size_t>(d);
    }
    return n;
}

}  // namespace

Tensor Tensor::make(std::vector<int> shape, std::vector<real> values) {
    auto s = std::make_shared<Storage>();
    const size_t n = shape_size(shape);
    if (values.size() != n) {
        fail(ErrorKind::dimension, "tensor data length " + std::to_string(values.size()) +
                                       " does not match shape product " + std::to_string(n));
    }
    s->shape = std::move(shape);
    s->data = std::move(values);
    return Tensor(std::move(s));
}

Tensor Tensor::zeros(std::vector<int> shape) {
    const size_t n = shape_size(shape);
    return make(std::move(shape), std::vector<real>(n, real(0)));
}

Tensor Tensor::full(std::vector<int> shape, real value) {
    const size_t n = shape_size(shape);
    return make(std::move(shape), std::vector<real>(n, value));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> values) {
    return make(std::move(shape), std::move(values));
}

Tensor Tensor::scalar(real value) { return make({1}, {value}); }

const std::vector<int>& Tensor::shape() const {
    if (!s_) fail(ErrorKind::contract, "shape() on undefined tensor");
    return s_->shape;
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int i) const {
    const auto& sh = shape();
    if (i < 0 || i >= static_cast<int>(sh.size())) fail(ErrorKind::dimension, "dim index out of range");
    return sh[static_cast<size_t>(i)];
}

int Tensor::rows() const {
    const auto& sh = shape();
    return sh.size() >= 2 ? sh[0] : 1;
}

int Tensor::cols() const {
    const auto& sh = shape();
    if (sh.empty()) fail(ErrorKind::dimension, "cols() on empty shape");
    return sh.size() >= 2 ? sh[1] : sh[0];
}

size_t Tensor::size() const { return s_ ? s_->data.size() : 0; }

std::span<const real> Tensor::data() const {
    if (!s_) fail(ErrorKind::contract, "data() on undefined tensor");
    return s_->data;
}

std::span<real> Tensor::mutable_data() {
    if (!s_) fail(ErrorKind::contract, "mutable_data() on undefined tensor");
    return s_->data;
}

real Tensor::value() const {
    if (size() != 1) fail(ErrorKind::contract, "value() requires a scalar tensor");
    return s_->data[0];
}

real Tensor::at(int i) const {
    if (i < 0 || static_cast<size_t>(i) >= size()) fail(ErrorKind::dimension, "index out of range");
    return s_->data[static_cast<size_t>(i)];
}

real Tensor::at(int i, int j) const {
    const int c = cols();
    if (i < 0 || i >= rows() || j < 0 || j >= c) fail(ErrorKind::dimension, "index out of range");
    return s_->data[static_cast<size_t>(i) * static_cast<size_t>(c) + static_cast<size_t>(j)];
}

bool Tensor::is_leaf() const { return s_ && s_->leaf; }

Tensor& Tensor::set_leaf(bool leaf) {
    if (!s_) fail(ErrorKind::contract, "set_leaf() on undefined tensor");
    s_->leaf = leaf;
    return *this;
}

const std::vector<real>* Tensor::grad() const {
    if (!s_ || !s_->has_grad) return nullptr;
    return &s_->grad;
}

std::vector<real>& Tensor::grad_buffer() {
    if (!s_) fail(ErrorKind::contract, "grad_buffer() on undefined tensor");
    if (!s_->has_grad) {
        s_->grad.assign(s_->data.size(), real(0));
        s_->has_grad = true;
    }
    return s_->grad;
}

void Tensor::zero_grad() {
    if (s_ && s_->has_grad) s_->grad.assign(s_->data.size(), real(0));
}

void Tensor::accumulate_grad(std::span<const real> g) {
    auto& buf = grad_buffer();
    if (g.size() != buf.size()) fail(ErrorKind::dimension, "gradient size mismatch");
    for (size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

Tensor Tensor::detached() const {
    if (!s_) return Tensor();
    return make(s_->shape, s_->data);
}

void Tape::reset() {
    nodes_.clear();
    adjoints_.clear();
    leaves_.clear();
    leaf_ids_.clear();
}

void Tape::record(BackFn fn, std::initializer_list<Tensor> inputs) {
    for (const Tensor& t : inputs) {
        if (t.defined() && t.is_leaf() && !leaf_ids_.count(t.id())) {
            leaf_ids_.insert(t.id());
            leaves_.push_back(t);
        }
    }
    nodes_.push_back(std::move(fn));
}

std::vector<real>& Tape::adjoint(const Tensor& t) {
    auto it = adjoints_.find(t.id());
    if (it == adjoints_.end()) {
        it = adjoints_.emplace(t.id(), std::vector<real>(t.size(), real(0))).first;
    }
    return it->second;
}

const std::vector<real>* Tape::find_adjoint(const Tensor& t) const {
    auto it = adjoints_.find(t.id());
    return it == adjoints_.end() ? nullptr : &it->second;
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) fail(ErrorKind::contract, "backward() requires a scalar loss");
    adjoints_.clear();
    adjoint(loss)[0] = real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        (*it)(*this);
    }
    // adjoints live in tape-private buffers; only leaves receive gradients
    for (Tensor& leaf : leaves_) {
        if (const auto* adj = find_adjoint(leaf)) {
            leaf.accumulate_grad(*adj);
        }
    }
    adjoints_.clear();
}

}  // namespace fvlab
