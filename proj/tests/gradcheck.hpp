#pragma once

// Central finite-difference oracle for the reverse-mode graph. Lives in test
// code and stays independent of the backward implementation it checks: it
// re-runs the forward pass with perturbed leaf values.

#include <cmath>
#include <functional>
#include <vector>

#include "ace/graph.hpp"
#include "ace/rng.hpp"

namespace ace::testing {

// grad_check registers every leaf as a graph parameter (in order) and passes
// the node ids to the builder, which assembles and returns the scalar loss.
using BuildFn = std::function<ace::Graph<double>::Id(ace::Graph<double>&,
                                                     const std::vector<ace::Graph<double>::Id>&)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Relative error uses max(|a|, |n|, 1) in the denominator so tiny gradients
// are compared absolutely.
inline GradCheckResult grad_check(const BuildFn& build, std::vector<ace::Tensor<double>> leaves,
                                  double h = 1e-4) {
    auto run = [&](bool want_grads) {
        auto g = std::make_unique<ace::Graph<double>>();
        std::vector<ace::Graph<double>::Id> ids;
        ids.reserve(leaves.size());
        for (const auto& t : leaves) ids.push_back(g->param(t));
        auto loss = build(*g, ids);
        if (want_grads) g->backward(loss);
        return std::pair{std::move(g), loss};
    };

    auto [ga, loss_id] = run(true);

    GradCheckResult res;
    for (size_t li = 0; li < leaves.size(); ++li) {
        for (int64_t i = 0; i < leaves[li].numel(); ++i) {
            double orig = leaves[li].v[static_cast<size_t>(i)];
            leaves[li].v[static_cast<size_t>(i)] = orig + h;
            auto [gp, lp] = run(false);
            double fp = gp->val(lp).v[0];
            leaves[li].v[static_cast<size_t>(i)] = orig - h;
            auto [gm, lm] = run(false);
            double fm = gm->val(lm).v[0];
            leaves[li].v[static_cast<size_t>(i)] = orig;
            double num = (fp - fm) / (2.0 * h);
            double ana = ga->grad(static_cast<ace::Graph<double>::Id>(li)).v[static_cast<size_t>(i)];
            double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1.0});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_analytic = ana;
                res.worst_numeric = num;
            }
        }
    }
    return res;
}

inline ace::Tensor<double> random_tensor(ace::Rng& rng, ace::Shape shape, double scale = 1.0) {
    ace::Tensor<double> t(std::move(shape));
    for (auto& v : t.v) v = rng.normal(0.0, scale);
    return t;
}

}  // namespace ace::testing
