#include "vocaldiff/tensor.hpp"

#include <atomic>
#include <cstring>

namespace vocaldiff {

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            s += ", ";
        }
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

template <typename T>
bool BasicTensor<T>::bitwise_equal(const BasicTensor& other) const {
    return shape_ == other.shape_ &&
           std::memcmp(data_->data(), other.data_->data(), data_->size() * sizeof(T)) == 0;
}

namespace {
std::atomic<std::uint64_t> next_tape_id{1};
}

template <typename T>
BasicTape<T>::BasicTape() : id_(next_tape_id.fetch_add(1)) {}

template <typename T>
BasicTape<T>*& BasicTape<T>::active_slot() {
    static thread_local BasicTape<T>* slot = nullptr;
    return slot;
}

template <typename T>
BasicTape<T>* BasicTape<T>::active() {
    return active_slot();
}

template <typename T>
BasicTensor<T> BasicTape<T>::watch(const BasicTensor<T>& t) {
    BasicTensor<T> out = t.detach();
    out.node_ = static_cast<NodeId>(nodes_.size());
    out.tape_id_ = id_;
    nodes_.push_back(Node{{}, {}, t.shape(), true});
    sizes_.push_back(t.size());
    return out;
}

template <typename T>
BasicTensor<T> BasicTape<T>::record(BasicTensor<T> out,
                                    const std::vector<const BasicTensor<T>*>& inputs,
                                    BackwardFn fn) {
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const auto* in : inputs) {
        ids.push_back(tracks(*in) ? in->node_ : NodeId{-1});
    }
    out.node_ = static_cast<NodeId>(nodes_.size());
    out.tape_id_ = id_;
    nodes_.push_back(Node{std::move(ids), std::move(fn), out.shape(), false});
    sizes_.push_back(out.size());
    return out;
}

template <typename T>
GradMap<T> BasicTape<T>::backward(const BasicTensor<T>& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (!tracks(loss)) {
        throw ContractError("loss is not connected to this tape");
    }
    std::vector<std::vector<T>> grads(nodes_.size());
    auto root = static_cast<std::size_t>(loss.node_);
    grads[root].assign(1, T(1));

    for (std::size_t n = root + 1; n-- > 0;) {
        auto& node = nodes_[n];
        if (node.leaf || grads[n].empty()) {
            continue;
        }
        GradSink<T> sink(grads, node.inputs, sizes_);
        std::span<const T> gout(grads[n].data(), grads[n].size());
        node.backward(gout, sink);
        grads[n].clear();
        grads[n].shrink_to_fit();
    }

    GradMap<T> out;
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
        if (!nodes_[n].leaf) {
            continue;
        }
        if (grads[n].empty()) {
            out.emplace(static_cast<NodeId>(n), BasicTensor<T>::zeros(nodes_[n].shape));
        } else {
            out.emplace(static_cast<NodeId>(n), BasicTensor<T>(nodes_[n].shape, std::move(grads[n])));
        }
    }
    return out;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicTape<float>;
template class BasicTape<double>;

} // namespace vocaldiff
