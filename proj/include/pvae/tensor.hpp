#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pvae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the define-by-run graph. Leaves have no backward function;
// interior nodes accumulate their gradient into their inputs' buffers.
struct Node {
    std::uint64_t id = 0;  // creation order; inputs always have smaller ids
    std::size_t size = 0;
    Shape shape;
    std::vector<double> grad;  // empty until backward touches the node
    std::vector<std::shared_ptr<Node>> inputs;  // nullptr for untracked inputs
    std::function<void(Node&)> backward;

    bool is_leaf() const { return !backward; }

    // Gradient buffer of input i, zero-allocated on first use; nullptr when
    // that input is not tracked.
    double* input_grad(std::size_t i);
};

std::uint64_t next_node_id();

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor full(Shape shape, double value);
    static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value) { return from({1}, {value}); }

    // Tracked leaf: gradients w.r.t. this tensor are collected by backward().
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const { return storage_ != nullptr; }
    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const { return storage_ ? storage_->size() : 0; }

    std::span<const double> data() const { return {storage_->data(), storage_->size()}; }
    // In-place access. Only valid on untracked tensors and leaves (optimizer
    // updates, test fixtures); interior graph values are immutable.
    std::span<double> mutable_data();
    const double* raw() const { return storage_->data(); }

    double item() const;
    double operator[](std::size_t i) const { return (*storage_)[i]; }

    bool tracked() const { return node_ != nullptr; }
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    std::uint64_t node_id() const { return node_ ? node_->id : 0; }

    // Same values, no graph node.
    Tensor detach() const;
    // Same values, fresh tracked leaf (gradient probes).
    Tensor as_leaf() const;
    // Deep copy of the values, untracked.
    Tensor clone() const;

    // New view with the given shape sharing values; gradient flows through.
    Tensor reshape(Shape shape) const;

    // Result construction for differentiable operations. A node is attached
    // only when some input is tracked and gradient recording is enabled.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::initializer_list<const Tensor*> inputs,
                              std::function<void(detail::Node&)> backward);
    static Tensor make_result(Shape shape, std::vector<double> values,
                              const std::vector<const Tensor*>& inputs,
                              std::function<void(detail::Node&)> backward);

private:
    Tensor(Shape shape, std::shared_ptr<std::vector<double>> storage,
           std::shared_ptr<detail::Node> node)
        : shape_(std::move(shape)), storage_(std::move(storage)), node_(std::move(node)) {}

    Shape shape_;
    std::shared_ptr<std::vector<double>> storage_;
    std::shared_ptr<detail::Node> node_;
};

// While alive on a thread, operations on that thread record no graph.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

}  // namespace pvae
