#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>

#include "pvae/tensor.hpp"

namespace pvae {

// d(loss)/d(leaf) for every tracked leaf reachable from a loss, keyed by the
// leaf's identity. Entries iterate in leaf creation order.
class GradientMap {
public:
    bool contains(const Tensor& leaf) const;
    // Throws ContractError when the leaf was not reachable from the loss.
    const Tensor& at(const Tensor& leaf) const;
    const Tensor* find(const Tensor& leaf) const;
    std::size_t size() const { return grads_.size(); }

    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

    void insert(std::uint64_t leaf_id, Tensor grad);

private:
    std::map<std::uint64_t, Tensor> grads_;
};

// Reverse-mode sweep from a scalar loss. Interior gradient buffers are
// released afterwards, so the same graph may be swept again.
GradientMap backward(const Tensor& loss);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `f` must build its result from `point` (the probe passes a tracked leaf).
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& point, double eps);

}  // namespace pvae
