#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cwtnet/errors.hpp"
#include "cwtnet/tensor.hpp"

namespace cwtnet {

// Named, ordered store of learnable arrays with matching gradient slots.
// Biases are stored as (c, 1, 1, 1) tensors.
template <typename T>
class Parameters {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        Tensor<T> grad;
    };

    std::size_t add(std::string name, Tensor<T> value) {
        if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
        Tensor<T> grad(value.shape());
        index_.emplace(name, entries_.size());
        entries_.push_back(Entry{std::move(name), std::move(value), std::move(grad)});
        return entries_.size() - 1;
    }

    [[nodiscard]] bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

    [[nodiscard]] std::size_t index_of(std::string_view name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("unknown parameter '" + std::string(name) + "'");
        return it->second;
    }

    Entry& operator[](std::size_t i) { return entries_[i]; }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }
    Entry& operator[](std::string_view name) { return entries_[index_of(name)]; }
    const Entry& operator[](std::string_view name) const { return entries_[index_of(name)]; }

    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    void zero_grad() {
        for (auto& e : entries_) e.grad.fill(T(0));
    }

    // Total number of scalar values.
    [[nodiscard]] std::size_t count() const noexcept {
        std::size_t total = 0;
        for (const auto& e : entries_) total += e.value.size();
        return total;
    }

    template <typename U>
    [[nodiscard]] Parameters<U> cast() const {
        Parameters<U> out;
        for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    [[nodiscard]] Tape<T>& tape() const { return *tape_; }
    [[nodiscard]] std::size_t id() const noexcept { return id_; }
    [[nodiscard]] const Tensor<T>& value() const { return tape_->value(id_); }
    [[nodiscard]] const Shape& shape() const { return tape_->value(id_).shape(); }
    [[nodiscard]] bool requires_grad() const { return tape_->requires_grad(id_); }
    [[nodiscard]] const Tensor<T>& grad() const { return tape_->grad(id_); }
    [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

// Reverse-mode tape. Operations append nodes in evaluation order; backward()
// replays their gradient rules in reverse. A node's gradient rule reads the
// node's own gradient and accumulates into its inputs' gradients.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    [[nodiscard]] bool grad_enabled() const noexcept { return grad_enabled_; }

    Var<T> constant(Tensor<T> v) { return push(std::move(v), false, {}); }

    // Leaf that receives a gradient (inputs under gradient check).
    Var<T> variable(Tensor<T> v) { return push(std::move(v), grad_enabled_, {}); }

    // Leaf bound to a parameter entry; backward() accumulates into its grad slot.
    Var<T> parameter(Parameters<T>& params, std::size_t index) {
        auto& entry = params[index];
        if (!grad_enabled_) return push(entry.value, false, {});
        Parameters<T>* store = &params;
        return push(entry.value, true, [store, index](Tape& tape, std::size_t self) {
            (*store)[index].grad += tape.grad(self);
        });
    }

    // Record an operation output. fn is dropped when no input needs a gradient.
    Var<T> record(Tensor<T> value, bool needs_grad, BackwardFn fn) {
        needs_grad = needs_grad && grad_enabled_;
        return push(std::move(value), needs_grad, needs_grad ? std::move(fn) : BackwardFn{});
    }

    template <typename... Vs>
    [[nodiscard]] bool any_requires_grad(const Vs&... vs) const {
        return (requires_grad(vs.id()) || ...);
    }

    [[nodiscard]] const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
    [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    // Gradient buffer of node id, zero-allocated on first access.
    Tensor<T>& grad(std::size_t id) {
        auto& node = nodes_[id];
        if (node.grad.empty()) node.grad = Tensor<T>(node.value.shape());
        return node.grad;
    }
    const Tensor<T>& grad(std::size_t id) const { return nodes_[id].grad; }

    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    void backward(const Var<T>& loss) {
        if (loss.value().size() != 1) {
            throw UsageError("backward: loss must be a scalar, got shape " + loss.shape().str());
        }
        if (!requires_grad(loss.id())) return;
        grad(loss.id())[0] = T(1);
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            auto& node = nodes_[i];
            if (!node.requires_grad || node.grad.empty() || !node.backward) continue;
            node.backward(*this, i);
        }
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    Var<T> push(Tensor<T> v, bool requires_grad, BackwardFn fn) {
        nodes_.push_back(Node{std::move(v), Tensor<T>{}, requires_grad, std::move(fn)});
        return Var<T>(this, nodes_.size() - 1);
    }

    bool grad_enabled_;
    std::vector<Node> nodes_;
};

// Resolves hierarchical parameter names ("sr.head" / "weight") onto a tape.
template <typename T>
class ParamScope {
public:
    ParamScope(Tape<T>& tape, Parameters<T>& params, std::string prefix = {})
        : tape_(&tape), params_(&params), prefix_(std::move(prefix)) {}

    [[nodiscard]] Var<T> operator[](std::string_view name) const {
        return tape_->parameter(*params_, params_->index_of(join(name)));
    }

    [[nodiscard]] ParamScope sub(std::string_view child) const {
        return ParamScope(*tape_, *params_, join(child));
    }

    [[nodiscard]] bool has(std::string_view name) const { return params_->contains(join(name)); }
    [[nodiscard]] Tape<T>& tape() const { return *tape_; }
    [[nodiscard]] const std::string& prefix() const noexcept { return prefix_; }

private:
    [[nodiscard]] std::string join(std::string_view name) const {
        return prefix_.empty() ? std::string(name) : prefix_ + "." + std::string(name);
    }

    Tape<T>* tape_;
    Parameters<T>* params_;
    std::string prefix_;
};

} // namespace cwtnet
