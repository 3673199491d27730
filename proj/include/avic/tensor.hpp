#pragma once

#include <cmath>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "avic/common.hpp"

namespace avic {

// Handle into the active tape. Invalid handles (id < 0) stand for "absent"
// optional arguments such as a missing bias.
struct TensorRef {
    int id = -1;
    bool valid() const { return id >= 0; }
};

template <typename T>
class Tape;

// Gradients keyed by tape node id. Shapes mirror the forward values.
template <typename T>
struct GradientMap {
    std::unordered_map<int, std::vector<T>> entries;

    bool contains(TensorRef r) const { return entries.count(r.id) != 0; }
    const std::vector<T>& at(TensorRef r) const {
        auto it = entries.find(r.id);
        if (it == entries.end()) throw Error("GradientMap: no entry for node " + std::to_string(r.id));
        return it->second;
    }
};

template <typename T>
bool all_finite(const std::vector<T>& v) {
    // A double accumulator goes NaN/Inf iff some element is non-finite;
    // finite desk-scale sums cannot overflow it.
    double acc = 0.0;
    for (T x : v) acc += static_cast<double>(x);
    return std::isfinite(acc);
}

// Reverse-mode tape. One tape per training step; nodes only reference
// earlier nodes, so reverse creation order is a valid topological order.
template <typename T>
class Tape {
public:
    using BackpropFn = std::function<void(Tape<T>&, const std::vector<T>&)>;

    struct Node {
        Shape shape;
        std::vector<T> value;
        bool requires_grad = false;
        BackpropFn backprop;  // empty for leaves and non-grad nodes
        const char* op = "leaf";
    };

    TensorRef leaf(std::vector<T> value, Shape shape, bool requires_grad) {
        return push(std::move(shape), std::move(value), requires_grad, "leaf", nullptr);
    }

    TensorRef make(Shape shape, std::vector<T> value, bool requires_grad, const char* op,
                   BackpropFn backprop) {
        return push(std::move(shape), std::move(value), requires_grad, op, std::move(backprop));
    }

    const std::vector<T>& value(TensorRef r) const { return node(r).value; }
    const Shape& shape(TensorRef r) const { return node(r).shape; }
    bool requires_grad(TensorRef r) const { return node(r).requires_grad; }
    size_t size() const { return nodes_.size(); }

    // Gradients of a scalar loss w.r.t. every grad-requiring node reached by
    // the reverse sweep. Single use per tape until reset().
    GradientMap<T> backward(TensorRef loss) {
        begin_backward();
        return run_backward(loss);
    }

    // Two roots from one forward pass, one backward event. Each root gets an
    // independent sweep with its own accumulators.
    std::pair<GradientMap<T>, GradientMap<T>> backward_pair(TensorRef a, TensorRef b) {
        begin_backward();
        auto ga = run_backward(a);
        auto gb = run_backward(b);
        return {std::move(ga), std::move(gb)};
    }

    void reset() {
        nodes_.clear();
        grads_.clear();
        consumed_ = false;
    }

    // called by backprop closures
    void accumulate_grad(int id, const T* g, size_t n) {
        auto& buf = grads_[static_cast<size_t>(id)];
        if (buf.empty()) buf.assign(n, T(0));
        for (size_t i = 0; i < n; ++i) buf[i] += g[i];
    }
    std::vector<T>& grad_buffer(int id, size_t n) {
        auto& buf = grads_[static_cast<size_t>(id)];
        if (buf.empty()) buf.assign(n, T(0));
        return buf;
    }

private:
    std::vector<Node> nodes_;
    std::vector<std::vector<T>> grads_;
    bool consumed_ = false;

    const Node& node(TensorRef r) const {
        if (!r.valid() || static_cast<size_t>(r.id) >= nodes_.size())
            throw Error("Tape: stale or invalid tensor handle");
        return nodes_[static_cast<size_t>(r.id)];
    }

    TensorRef push(Shape shape, std::vector<T> value, bool requires_grad, const char* op,
                   BackpropFn backprop) {
        check_shape_positive(shape, op);
        if (static_cast<int64_t>(value.size()) != numel(shape))
            throw ShapeError(std::string(op) + ": data length " + std::to_string(value.size()) +
                             " does not match shape " + shape_str(shape));
        if (!all_finite(value))
            throw NumericError(std::string(op) + ": non-finite value in output");
        nodes_.push_back(Node{std::move(shape), std::move(value), requires_grad,
                              requires_grad ? std::move(backprop) : nullptr, op});
        return TensorRef{static_cast<int>(nodes_.size()) - 1};
    }

    void begin_backward() {
        if (consumed_)
            throw Error("Tape: backward already ran on this tape; reset() before reuse");
        consumed_ = true;
    }

    GradientMap<T> run_backward(TensorRef loss) {
        const Node& ln = node(loss);
        if (numel(ln.shape) != 1)
            throw ShapeError("backward: loss must be scalar, got " + shape_str(ln.shape));
        if (!ln.requires_grad)
            throw Error("backward: loss is detached from every grad-requiring leaf");

        grads_.assign(nodes_.size(), {});
        grads_[static_cast<size_t>(loss.id)] = {T(1)};

        for (int id = loss.id; id >= 0; --id) {
            auto& g = grads_[static_cast<size_t>(id)];
            if (g.empty()) continue;
            auto& n = nodes_[static_cast<size_t>(id)];
            if (n.backprop) n.backprop(*this, g);
        }

        GradientMap<T> out;
        for (size_t id = 0; id < nodes_.size(); ++id) {
            auto& n = nodes_[id];
            if (!n.requires_grad || n.backprop) continue;  // only grad-requiring leaves
            auto& g = grads_[id];
            if (g.empty()) continue;  // leaf not reached by this root
            if (!all_finite(g))
                throw NumericError("backward: non-finite gradient for leaf node " + std::to_string(id));
            out.entries.emplace(static_cast<int>(id), std::move(g));
            grads_[id] = {};
        }
        return out;
    }
};

}  // namespace avic
