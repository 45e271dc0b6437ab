#include "pvae/tensor.hpp"

#include <atomic>
#include <sstream>

#include "pvae/errors.hpp"

namespace pvae {

namespace {

thread_local bool g_grad_enabled = true;

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (std::size_t d : shape)
        if (d == 0) throw ShapeError("tensor dimension of size 0 in " + shape_str(shape));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

std::uint64_t next_node_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

double* Node::input_grad(std::size_t i) {
    Node* in = inputs[i].get();
    if (!in) return nullptr;
    if (in->grad.empty()) in->grad.assign(in->size, 0.0);
    return in->grad.data();
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::full(Shape shape, double value) {
    validate_shape(shape);
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::make_shared<std::vector<double>>(n, value), nullptr);
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    validate_shape(shape);
    if (shape_numel(shape) != values.size())
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    return Tensor(std::move(shape), std::make_shared<std::vector<double>>(std::move(values)), nullptr);
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    return from(std::move(shape), std::move(values)).as_leaf();
}

std::span<double> Tensor::mutable_data() {
    if (node_ && !node_->is_leaf())
        throw ContractError("cannot mutate the values of an interior graph tensor");
    return {storage_->data(), storage_->size()};
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return (*storage_)[0];
}

Tensor Tensor::detach() const { return Tensor(shape_, storage_, nullptr); }

Tensor Tensor::as_leaf() const {
    auto node = std::make_shared<detail::Node>();
    node->id = detail::next_node_id();
    node->size = numel();
    node->shape = shape_;
    return Tensor(shape_, storage_, std::move(node));
}

Tensor Tensor::clone() const {
    return Tensor(shape_, std::make_shared<std::vector<double>>(*storage_), nullptr);
}

Tensor Tensor::reshape(Shape shape) const {
    validate_shape(shape);
    if (shape_numel(shape) != numel())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    std::shared_ptr<detail::Node> node;
    if (node_ && g_grad_enabled) {
        node = std::make_shared<detail::Node>();
        node->id = detail::next_node_id();
        node->size = numel();
        node->shape = shape;
        node->inputs = {node_};
        node->backward = [](detail::Node& self) {
            double* g = self.input_grad(0);
            for (std::size_t i = 0; i < self.size; ++i) g[i] += self.grad[i];
        };
    }
    return Tensor(std::move(shape), storage_, std::move(node));
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           std::initializer_list<const Tensor*> inputs,
                           std::function<void(detail::Node&)> backward) {
    return make_result(std::move(shape), std::move(values), std::vector<const Tensor*>(inputs),
                       std::move(backward));
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           const std::vector<const Tensor*>& inputs,
                           std::function<void(detail::Node&)> backward) {
    Tensor out = from(std::move(shape), std::move(values));
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const Tensor* t : inputs) any = any || (t && t->tracked());
    if (!any) return out;
    auto node = std::make_shared<detail::Node>();
    node->id = detail::next_node_id();
    node->size = out.numel();
    node->shape = out.shape_;
    node->inputs.reserve(inputs.size());
    for (const Tensor* t : inputs) node->inputs.push_back(t ? t->node_ : nullptr);
    node->backward = std::move(backward);
    out.node_ = std::move(node);
    return out;
}

}  // namespace pvae
