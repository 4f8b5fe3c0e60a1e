#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vocaldiff/errors.hpp"

namespace vocaldiff {

using Shape = std::vector<std::size_t>;
using NodeId = std::int64_t;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

template <typename T>
class BasicTape;

// Dense row-major tensor. The payload is shared and immutable, so copies are
// cheap and safe to hand across threads. A tensor that was produced under an
// active tape (or registered with BasicTape::watch) carries a node handle.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() : BasicTensor(Shape{1}, std::vector<T>(1, T(0))) {}

    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)) {
        for (auto d : shape_) {
            if (d < 1) {
                throw DimensionError("tensor dimensions must be >= 1, got " + shape_str(shape_));
            }
        }
        if (shape_.empty()) {
            throw DimensionError("tensor shape must have at least one dimension");
        }
        if (shape_numel(shape_) != data.size()) {
            throw DimensionError("shape " + shape_str(shape_) + " holds " +
                                 std::to_string(shape_numel(shape_)) + " values, got " +
                                 std::to_string(data.size()));
        }
        data_ = std::make_shared<const std::vector<T>>(std::move(data));
    }

    static BasicTensor zeros(Shape shape) {
        auto n = shape_numel(shape);
        return BasicTensor(std::move(shape), std::vector<T>(n, T(0)));
    }

    static BasicTensor full(Shape shape, T value) {
        auto n = shape_numel(shape);
        return BasicTensor(std::move(shape), std::vector<T>(n, value));
    }

    static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, std::vector<T>{value}); }

    const Shape& shape() const { return shape_; }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_->size(); }

    std::span<const T> data() const { return {data_->data(), data_->size()}; }
    const std::vector<T>& values() const { return *data_; }
    T operator[](std::size_t i) const { return (*data_)[i]; }
    T at(std::size_t row, std::size_t col) const { return (*data_)[row * shape_.back() + col]; }

    T item() const {
        if (size() != 1) {
            throw ContractError("item() on tensor of shape " + shape_str(shape_));
        }
        return (*data_)[0];
    }

    bool requires_grad() const { return node_ >= 0; }
    std::optional<NodeId> node_id() const {
        return node_ >= 0 ? std::optional<NodeId>(node_) : std::nullopt;
    }
    std::uint64_t tape_id() const { return tape_id_; }

    // Same values, no tape participation.
    BasicTensor detach() const {
        BasicTensor out(*this);
        out.node_ = -1;
        out.tape_id_ = 0;
        return out;
    }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_->begin(), data_->end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    bool bitwise_equal(const BasicTensor& other) const;

private:
    friend class BasicTape<T>;

    Shape shape_;
    std::shared_ptr<const std::vector<T>> data_;
    NodeId node_ = -1;
    std::uint64_t tape_id_ = 0;
};

// Hands a backward rule pointers into the gradient buffers of its inputs.
// Untracked inputs yield nullptr and must be skipped.
template <typename T>
class GradSink {
public:
    GradSink(std::vector<std::vector<T>>& grads, const std::vector<NodeId>& inputs,
             const std::vector<std::size_t>& sizes)
        : grads_(grads), inputs_(inputs), sizes_(sizes) {}

    T* grad(std::size_t input_index) {
        auto id = inputs_[input_index];
        if (id < 0) {
            return nullptr;
        }
        auto& buf = grads_[static_cast<std::size_t>(id)];
        if (buf.empty()) {
            buf.assign(sizes_[static_cast<std::size_t>(id)], T(0));
        }
        return buf.data();
    }

private:
    std::vector<std::vector<T>>& grads_;
    const std::vector<NodeId>& inputs_;
    const std::vector<std::size_t>& sizes_;
};

template <typename T>
using GradMap = std::map<NodeId, BasicTensor<T>>;

// Reverse-mode tape. Nodes are appended in execution order, so the node list
// is already topologically sorted. A tape belongs to the thread that created
// it; ops record onto the tape installed by TapeScope on the calling thread.
template <typename T>
class BasicTape {
public:
    using BackwardFn = std::function<void(std::span<const T> grad_out, GradSink<T>& sink)>;

    BasicTape();
    BasicTape(const BasicTape&) = delete;
    BasicTape& operator=(const BasicTape&) = delete;

    // Registers a leaf. The returned tensor shares data with `t`.
    BasicTensor<T> watch(const BasicTensor<T>& t);

    // Records a primitive application; returns `out` with its node attached.
    // Inputs that are not on this tape are treated as constants.
    BasicTensor<T> record(BasicTensor<T> out, const std::vector<const BasicTensor<T>*>& inputs,
                          BackwardFn fn);

    bool tracks(const BasicTensor<T>& t) const { return t.node_ >= 0 && t.tape_id_ == id_; }

    // d(loss)/d(leaf) for every watched leaf (zeros where the leaf is unreachable).
    GradMap<T> backward(const BasicTensor<T>& loss);

    std::size_t size() const { return nodes_.size(); }
    std::uint64_t id() const { return id_; }

    static BasicTape* active();

private:
    template <typename>
    friend class TapeScope;

    struct Node {
        std::vector<NodeId> inputs;
        BackwardFn backward;
        Shape shape;
        bool leaf = false;
    };

    static BasicTape*& active_slot();

    std::uint64_t id_;
    std::vector<Node> nodes_;
    std::vector<std::size_t> sizes_;
};

// Installs a tape as the calling thread's recording target for its lifetime.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(BasicTape<T>& tape) : previous_(BasicTape<T>::active_slot()) {
        BasicTape<T>::active_slot() = &tape;
    }
    ~TapeScope() { BasicTape<T>::active_slot() = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    BasicTape<T>* previous_;
};

// Wraps a freshly computed value: records it on the active tape when any
// input is tracked there, otherwise returns it as a constant.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data,
                           const std::vector<const BasicTensor<T>*>& inputs,
                           typename BasicTape<T>::BackwardFn fn) {
    BasicTensor<T> out(std::move(shape), std::move(data));
    auto* tape = BasicTape<T>::active();
    if (tape == nullptr) {
        return out;
    }
    bool any = false;
    for (const auto* in : inputs) {
        if (in->requires_grad()) {
            if (!tape->tracks(*in)) {
                throw ContractError("tensor is tracked by a different tape");
            }
            any = true;
        }
    }
    if (!any) {
        return out;
    }
    return tape->record(std::move(out), inputs, std::move(fn));
}

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;
using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class BasicTape<float>;
extern template class BasicTape<double>;

} // namespace vocaldiff
