#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace gafnau {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

struct TensorStorage {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until the first adjoint lands here
    bool requires_grad = false;
};

// Shared handle to a dense row-major array. Copies alias the same storage.
class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return storage_ != nullptr; }
    const Shape& shape() const { return storage_->shape; }
    std::size_t dim(std::size_t i) const { return storage_->shape.at(i); }
    std::size_t rank() const { return storage_->shape.size(); }
    std::size_t size() const { return storage_->values.size(); }

    std::span<double> values() { return storage_->values; }
    std::span<const double> values() const { return storage_->values; }
    double item() const;

    bool requires_grad() const { return storage_->requires_grad; }
    void set_requires_grad(bool on) { storage_->requires_grad = on; }

    bool has_grad() const { return !storage_->grad.empty(); }
    std::span<const double> grad() const { return storage_->grad; }
    // Allocates a zero-filled gradient buffer on first use.
    std::span<double> grad_buffer() const;
    void zero_grad() const;

    Tensor detached_copy() const;

    TensorStorage* storage() const { return storage_.get(); }
    bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

   private:
    std::shared_ptr<TensorStorage> storage_;
};

// Ordered log of applied operations. Replaying it in reverse accumulates
// adjoints into every tensor that requires a gradient.
class Tape {
   public:
    enum class Mode { kRecord, kInference };

    explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return mode_ == Mode::kRecord; }

    // Registers `output` as produced from `inputs`. The adjoint closure reads
    // output.grad() and adds into the inputs' grad buffers.
    void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> adjoint);

    // Seeds d(loss)/d(loss) = 1 and replays the record in reverse.
    void backward(const Tensor& loss);

    std::size_t size() const { return entries_.size(); }
    void clear();

    // Hash of the discrete branch decisions taken so far (relu masks, pooling
    // and min/max arg indices). Equal signatures across two forward passes mean
    // both evaluations lie on the same smooth piece.
    std::uint64_t branch_signature() const { return signature_; }
    void mix_signature(std::uint64_t v);

   private:
    struct Entry {
        std::vector<Tensor> inputs;
        Tensor output;
        std::function<void()> adjoint;
    };

    Mode mode_;
    std::vector<Entry> entries_;
    std::unordered_set<const TensorStorage*> produced_;
    std::uint64_t signature_ = 0x9e3779b97f4a7c15ULL;
};

}  // namespace gafnau
