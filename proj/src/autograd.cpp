#include "pvae/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <vector>

#include "pvae/errors.hpp"

namespace pvae {

bool GradientMap::contains(const Tensor& leaf) const {
    return leaf.tracked() && grads_.count(leaf.node_id()) != 0;
}

const Tensor* GradientMap::find(const Tensor& leaf) const {
    if (!leaf.tracked()) return nullptr;
    auto it = grads_.find(leaf.node_id());
    return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& GradientMap::at(const Tensor& leaf) const {
    const Tensor* g = find(leaf);
    if (!g) throw ContractError("no gradient recorded for this tensor (not reachable from the loss)");
    return *g;
}

void GradientMap::insert(std::uint64_t leaf_id, Tensor grad) { grads_[leaf_id] = std::move(grad); }

GradientMap backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1 || loss.rank() != 1)
        throw ContractError("backward() needs a scalar loss of shape [1]");
    if (!loss.tracked()) throw ContractError("backward() on a loss with no gradient node");

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{loss.node().get()};
    while (!stack.empty()) {
        detail::Node* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        order.push_back(n);
        for (const auto& in : n->inputs)
            if (in) stack.push_back(in.get());
    }
    // Inputs are always created before their consumers.
    std::sort(order.begin(), order.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

    for (detail::Node* n : order) n->grad.clear();
    loss.node()->grad.assign(1, 1.0);

    GradientMap result;
    for (detail::Node* n : order) {
        if (n->is_leaf()) continue;
        if (n->grad.empty()) continue;  // no path to the loss carries gradient here
        n->backward(*n);
    }
    for (detail::Node* n : order) {
        if (n->is_leaf()) {
            std::vector<double> g = n->grad.empty() ? std::vector<double>(n->size, 0.0) : std::move(n->grad);
            result.insert(n->id, Tensor::from(n->shape, std::move(g)));
        }
        n->grad.clear();
        n->grad.shrink_to_fit();
    }
    return result;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double eps) {
    if (!(eps > 0.0)) throw ContractError("finite_difference_check: eps must be positive");
    const Tensor leaf = point.clone().as_leaf();
    const Tensor out = f(leaf);
    if (!std::isfinite(out.item())) throw NumericError("finite_difference_check: non-finite f output");
    const GradientMap grads = backward(out);
    const Tensor* g = grads.find(leaf);
    std::vector<double> analytic(leaf.numel(), 0.0);
    if (g)
        for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = (*g)[i];

    Tensor probe = point.clone();
    double worst = 0.0;
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < probe.numel(); ++i) {
        const double x0 = probe[i];
        probe.mutable_data()[i] = x0 + eps;
        const double fp = f(probe).item();
        probe.mutable_data()[i] = x0 - eps;
        const double fm = f(probe).item();
        probe.mutable_data()[i] = x0;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_difference_check: non-finite f output");
        const double numeric = (fp - fm) / (2.0 * eps);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace pvae
