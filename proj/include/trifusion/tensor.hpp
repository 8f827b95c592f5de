#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trifusion/error.hpp"

namespace trifusion {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

template <typename T>
class Tape;

template <typename T>
class GradientMap;

/// Dense row-major tensor. A tensor returned by Tape::watch, or produced by an
/// op with at least one tracked input, carries a handle to its tape node.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() : shape_{1}, data_(1, T{0}) {}

    explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
        check_shape(shape_);
        data_.assign(shape_size(shape_), T{0});
    }

    BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape(shape_);
        if (shape_size(shape_) != data_.size()) {
            throw DimensionError("data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
        }
    }

    static BasicTensor full(Shape shape, T value) {
        BasicTensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }
    static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
    static BasicTensor ones(Shape shape) { return full(std::move(shape), T{1}); }
    static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, {value}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool is_scalar() const noexcept { return data_.size() == 1; }

    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    /// Writable view of an untracked tensor. Tracked values are frozen because
    /// the tape may have saved them.
    std::span<T> mutable_data() {
        if (tracked()) {
            throw ContractError("cannot mutate a tensor recorded on a tape; detach() first");
        }
        return data_;
    }

    T operator[](std::size_t i) const { return data_[i]; }
    T item() const {
        if (!is_scalar()) {
            throw ContractError("item() on tensor of shape " + shape_string(shape_));
        }
        return data_[0];
    }

    bool tracked() const noexcept { return tape_ != nullptr; }
    Tape<T>* tape() const noexcept { return tape_; }
    std::size_t node() const noexcept { return node_; }

    /// Copy of the values without the tape handle.
    BasicTensor detach() const {
        BasicTensor t = *this;
        t.tape_ = nullptr;
        t.node_ = 0;
        return t;
    }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    bool same_values(const BasicTensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    friend class Tape<T>;

    static void check_shape(const Shape& shape) {
        if (shape.empty()) {
            throw DimensionError("tensor shape must have at least one dimension");
        }
        for (auto d : shape) {
            if (d == 0) {
                throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
            }
        }
    }

    Shape shape_;
    std::vector<T> data_;
    Tape<T>* tape_ = nullptr;
    std::size_t node_ = 0;
};

using Tensor = BasicTensor<float>;

/// Gradients of tracked leaves after Tape::backward.
template <typename T>
class GradientMap {
public:
    const BasicTensor<T>* find(const BasicTensor<T>& leaf) const {
        if (!leaf.tracked() || leaf.tape() != tape_) {
            return nullptr;
        }
        auto it = grads_.find(leaf.node());
        return it == grads_.end() ? nullptr : &it->second;
    }

    const BasicTensor<T>& at(const BasicTensor<T>& leaf) const {
        const auto* g = find(leaf);
        if (g == nullptr) {
            throw ContractError("no gradient recorded for this tensor (not a tracked leaf of the tape)");
        }
        return *g;
    }

    std::size_t leaf_count() const noexcept { return grads_.size(); }
    /// Number of tape nodes whose backward rule ran.
    std::size_t nodes_visited() const noexcept { return visited_; }

private:
    friend class Tape<T>;
    const Tape<T>* tape_ = nullptr;
    std::unordered_map<std::size_t, BasicTensor<T>> grads_;
    std::size_t visited_ = 0;
};

/// Append-only define-by-run tape. Confined to one thread; tensors recorded on
/// it hold a raw pointer, so the tape must outlive them.
template <typename T>
class Tape {
public:
    /// Gradient buffers of a node's inputs, allocated on first write.
    class InputGrads {
    public:
        bool wants(std::size_t i) const { return ids_[i] != untracked; }

        std::span<T> operator[](std::size_t i) {
            auto& buf = (*buffers_)[ids_[i]];
            if (buf.empty()) {
                buf.assign((*sizes_)[ids_[i]], T{0});
            }
            return buf;
        }

    private:
        friend class Tape;
        InputGrads(const std::vector<std::size_t>& ids, std::vector<std::vector<T>>* buffers,
                   const std::vector<std::size_t>* sizes)
            : ids_(ids), buffers_(buffers), sizes_(sizes) {}
        const std::vector<std::size_t>& ids_;
        std::vector<std::vector<T>>* buffers_;
        const std::vector<std::size_t>* sizes_;
    };

    using BackwardFn = std::function<void(std::span<const T> out_grad, InputGrads& inputs)>;

    static constexpr std::size_t untracked = std::numeric_limits<std::size_t>::max();

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Registers a leaf whose gradient backward() will report.
    BasicTensor<T> watch(BasicTensor<T> value) {
        if (value.tracked()) {
            throw ContractError("tensor is already recorded on a tape");
        }
        value.tape_ = this;
        value.node_ = push_node({}, value.size(), nullptr, true);
        leaf_shapes_.emplace(value.node_, value.shape());
        return value;
    }

    /// Records `out` as the result of an op over `inputs`. If no input is
    /// tracked, the result stays untracked and `fn` is dropped.
    static BasicTensor<T> record(BasicTensor<T> out, std::initializer_list<const BasicTensor<T>*> inputs,
                                 BackwardFn fn) {
        return record(std::move(out), std::vector<const BasicTensor<T>*>(inputs), std::move(fn));
    }

    static BasicTensor<T> record(BasicTensor<T> out, const std::vector<const BasicTensor<T>*>& inputs,
                                 BackwardFn fn) {
        Tape* tape = nullptr;
        for (const auto* in : inputs) {
            if (in->tracked()) {
                if (tape != nullptr && tape != in->tape()) {
                    throw ContractError("op inputs are recorded on different tapes");
                }
                tape = in->tape();
            }
        }
        out.tape_ = nullptr;
        if (tape == nullptr) {
            return out;
        }
        std::vector<std::size_t> ids;
        ids.reserve(inputs.size());
        for (const auto* in : inputs) {
            ids.push_back(in->tracked() ? in->node() : untracked);
        }
        out.tape_ = tape;
        out.node_ = tape->push_node(std::move(ids), out.size(), std::move(fn), false);
        return out;
    }

    /// Reverse sweep from a scalar loss. Each reachable node runs exactly once;
    /// a tensor consumed twice accumulates both contributions.
    GradientMap<T> backward(const BasicTensor<T>& loss) const {
        if (!loss.is_scalar()) {
            throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
        }
        if (loss.tape() != this) {
            throw ContractError("loss is not recorded on this tape");
        }
        std::vector<std::vector<T>> buffers(nodes_.size());
        buffers[loss.node()].assign(1, T{1});
        GradientMap<T> result;
        result.tape_ = this;
        for (std::size_t n = loss.node() + 1; n-- > 0;) {
            auto& node = nodes_[n];
            if (buffers[n].empty()) {
                continue;
            }
            ++result.visited_;
            if (node.leaf) {
                continue;
            }
            InputGrads grads(node.inputs, &buffers, &sizes_);
            node.fn(buffers[n], grads);
        }
        for (std::size_t n = 0; n < nodes_.size(); ++n) {
            if (!nodes_[n].leaf) {
                continue;
            }
            auto values = buffers[n].empty() ? std::vector<T>(sizes_[n], T{0}) : std::move(buffers[n]);
            result.grads_.emplace(n, BasicTensor<T>(leaf_shapes_.at(n), std::move(values)));
        }
        return result;
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        std::vector<std::size_t> inputs;
        BackwardFn fn;
        bool leaf;
    };

    std::size_t push_node(std::vector<std::size_t> inputs, std::size_t size, BackwardFn fn, bool leaf) {
        nodes_.push_back(Node{std::move(inputs), std::move(fn), leaf});
        sizes_.push_back(size);
        return nodes_.size() - 1;
    }

    std::vector<Node> nodes_;
    std::vector<std::size_t> sizes_;
    std::unordered_map<std::size_t, Shape> leaf_shapes_;
};

}  // namespace trifusion
