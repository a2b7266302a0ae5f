#pragma once

#include "sbi/layout.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace sbi {

// Central finite-difference gradient of a scalar function of a flat vector.
// Step is scaled per coordinate so log-stored and raw parameters are probed
// at comparable resolution.
template <typename F>
Eigen::VectorXd fd_gradient(F&& f, const Eigen::VectorXd& x, double h = 1e-5) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double hi = h * std::max(1.0, std::abs(x[i]));
        xp[i] = x[i] + hi;
        const double fp = f(xp);
        xp[i] = x[i] - hi;
        const double fm = f(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * hi);
    }
    return g;
}

// Five-point stencil, truncation O(h^4). Ill-conditioned inner solves leave
// round-off noise on the objective; the larger usable step keeps the
// quotient clean where the plain central difference cannot. Steps may vary
// per coordinate: linear-in-coordinate terms (inducing outcomes) tolerate a
// big step, curved ones (lengthscales, confounders) need a small one.
template <typename F>
Eigen::VectorXd fd_gradient_5pt(F&& f, const Eigen::VectorXd& x, const Eigen::VectorXd& h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double hi = h[i] * std::max(1.0, std::abs(x[i]));
        auto at = [&](double dx) {
            xp[i] = x[i] + dx;
            const double v = f(xp);
            xp[i] = x[i];
            return v;
        };
        g[i] = (at(-2 * hi) - 8 * at(-hi) + 8 * at(hi) - at(2 * hi)) / (12.0 * hi);
    }
    return g;
}

template <typename F>
Eigen::VectorXd fd_gradient_5pt(F&& f, const Eigen::VectorXd& x, double h = 1e-3) {
    return fd_gradient_5pt(std::forward<F>(f), x, Eigen::VectorXd::Constant(x.size(), h));
}

// step per coordinate for a model layout: large for the inducing outcomes
// (the objective is quadratic in them), small everywhere else
inline Eigen::VectorXd fd_steps(const ParamLayout& layout, double base = 1e-3,
                                double ycf_step = 3e-2) {
    Eigen::VectorXd h = Eigen::VectorXd::Constant(layout.total(), base);
    if (layout.has("Ycf")) {
        const auto& b = layout.block("Ycf");
        h.segment(b.offset, b.size).setConstant(ycf_step);
    }
    return h;
}

struct GradCheckReport {
    bool ok = true;
    double worst_err = 0.0;       // violation ratio against the tolerance
    Eigen::Index worst_index = -1;
    double analytic_at_worst = 0.0;
    double fd_at_worst = 0.0;
};

// |analytic - fd| <= max(rel_tol * max(|analytic|, |fd|), abs_floor), per
// coordinate.
inline GradCheckReport compare_gradients(const Eigen::VectorXd& analytic,
                                         const Eigen::VectorXd& fd, double rel_tol = 1e-4,
                                         double abs_floor = 1e-7) {
    GradCheckReport rep;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double diff = std::abs(analytic[i] - fd[i]);
        const double allow = std::max(rel_tol * std::max(std::abs(analytic[i]), std::abs(fd[i])),
                                      abs_floor);
        const double ratio = diff / allow;
        if (ratio > rep.worst_err) {
            rep.worst_err = ratio;
            rep.worst_index = i;
            rep.analytic_at_worst = analytic[i];
            rep.fd_at_worst = fd[i];
        }
    }
    rep.ok = rep.worst_err <= 1.0;
    return rep;
}

}  // namespace sbi
