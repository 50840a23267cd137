#pragma once

#include <cmath>
#include <functional>

#include "graph.hpp"

namespace unitprompt {

// Compares tape gradients of a scalar loss against central finite differences.
// The builder must construct the loss from the given leaves alone so that a
// rerun with perturbed values reproduces the same function. Returns the worst
// relative error max |analytic - numeric| / max(1, |numeric|).
inline double grad_check(const std::function<TensorPtr<double>(Graph<double>&)>& build,
                         const std::vector<TensorPtr<double>>& leaves, double eps = 1e-5) {
    require(eps >= 1e-7 && eps <= 1e-3, format_msg("grad_check: eps ", eps, " outside [1e-7, 1e-3]"));
    require(!leaves.empty(), "grad_check: no leaves to check");

    for (const auto& p : leaves) {
        require(p->trainable, format_msg("grad_check: leaf '", p->name, "' is not trainable"));
        p->g.clear();
    }
    {
        Graph<double> g;
        auto loss = build(g);
        require(loss->numel() == 1, "grad_check: builder must return a scalar");
        g.backward(loss);
    }

    auto eval = [&]() {
        Graph<double> g;
        auto loss = build(g);
        return loss->v[0];
    };

    double worst = 0.0;
    for (const auto& p : leaves) {
        p->ensure_grad();
        for (size_t i = 0; i < p->v.size(); ++i) {
            double saved = p->v[i];
            p->v[i] = saved + eps;
            double fp = eval();
            p->v[i] = saved - eps;
            double fm = eval();
            p->v[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::runtime_error(format_msg("grad_check: non-finite loss perturbing '", p->name,
                                                    "' at index ", i));
            double numeric = (fp - fm) / (2.0 * eps);
            double analytic = p->g[i];
            double rel = std::fabs(analytic - numeric) / std::max(1.0, std::fabs(numeric));
            if (rel > worst) worst = rel;
        }
    }
    return worst;
}

}  // namespace unitprompt
