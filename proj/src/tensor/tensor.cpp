#include "gafnau/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

namespace gafnau {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : storage_(std::make_shared<TensorStorage>()) {
    check_shape(shape);
    storage_->values.assign(numel(shape), fill);
    storage_->shape = std::move(shape);
    storage_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : storage_(std::make_shared<TensorStorage>()) {
    check_shape(shape);
    if (numel(shape) != values.size()) {
        throw ShapeError("shape " + to_string(shape) + " holds " + std::to_string(numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    storage_->shape = std::move(shape);
    storage_->values = std::move(values);
    storage_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor(Shape{1}, v, requires_grad); }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return storage_->values[0];
}

std::span<double> Tensor::grad_buffer() const {
    if (storage_->grad.empty()) storage_->grad.assign(storage_->values.size(), 0.0);
    return storage_->grad;
}

void Tensor::zero_grad() const { std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0); }

Tensor Tensor::detached_copy() const { return Tensor(shape(), storage_->values, false); }

void Tape::record(std::vector<Tensor> inputs, Tensor output, std::function<void()> adjoint) {
    if (!recording()) return;
    produced_.insert(output.storage());
    entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(adjoint)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || !produced_.contains(loss.storage())) {
        throw std::logic_error("backward: loss tensor was not produced on this tape");
    }
    if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar, got " + to_string(loss.shape()));

    // Intermediate adjoints are rebuilt on every pass; leaves keep accumulating.
    for (auto& e : entries_) e.output.zero_grad();
    Tensor seed = loss;
    seed.grad_buffer()[0] = 1.0;

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (!it->output.has_grad()) continue;
        it->adjoint();
    }
}

void Tape::clear() {
    entries_.clear();
    produced_.clear();
    signature_ = 0x9e3779b97f4a7c15ULL;
}

void Tape::mix_signature(std::uint64_t v) {
    // splitmix64 finaliser folded into the running hash
    v += 0x9e3779b97f4a7c15ULL + (signature_ << 6) + (signature_ >> 2);
    v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
    v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
    signature_ ^= v ^ (v >> 31);
}

}  // namespace gafnau
