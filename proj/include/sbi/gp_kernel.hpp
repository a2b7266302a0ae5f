#pragma once

#include "sbi/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace sbi {

inline constexpr double kLog2Pi = 1.8378770664093454836;

// RBF kernel, k(x, x'; l, s) = s * exp(-(x - x')^2 / l).
// Note the convention: lengthscale enters unsquared and without a factor 2.
inline double rbf(double x, double xp, double l, double s) {
    const double d = x - xp;
    return s * std::exp(-d * d / l);
}

struct ProductKernelHyper {
    double l_t = 1.0;
    double s_t = 1.0;
    bool has_second = false;
    double l_2 = 1.0;
    double s_2 = 1.0;
};

// Cross-covariance of the product RBF kernel between two point sets given as
// (treatment, optional second dimension) coordinates.
inline Eigen::MatrixXd product_kernel(const Eigen::VectorXd& t_a, const Eigen::VectorXd* s_a,
                                      const Eigen::VectorXd& t_b, const Eigen::VectorXd* s_b,
                                      const ProductKernelHyper& h) {
    const Eigen::Index na = t_a.size(), nb = t_b.size();
    Eigen::MatrixXd out(na, nb);
    for (Eigen::Index i = 0; i < na; ++i) {
        for (Eigen::Index j = 0; j < nb; ++j) {
            double k = rbf(t_a[i], t_b[j], h.l_t, h.s_t);
            if (h.has_second) k *= rbf((*s_a)[i], (*s_b)[j], h.l_2, h.s_2);
            out(i, j) = k;
        }
    }
    return out;
}

struct CholResult {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;
};

// Cholesky with escalating jitter relative to the mean diagonal. Product
// kernels over near-duplicate inputs are rank-deficient, so callers pass a
// nonzero base for those; dense covariances with a noise term start at zero.
inline CholResult chol_with_jitter(const Eigen::MatrixXd& a, double base_rel = 0.0,
                                   const char* what = "matrix") {
    const double mean_diag = a.diagonal().mean();
    const double levels[] = {base_rel, 1e-8, 1e-6, 1e-4};
    CholResult res;
    for (double rel : levels) {
        if (rel < base_rel) continue;
        res.jitter = rel * mean_diag;
        Eigen::MatrixXd m = a;
        if (res.jitter != 0.0) m.diagonal().array() += res.jitter;
        res.llt.compute(m);
        if (res.llt.info() == Eigen::Success) return res;
    }
    throw SingularMatrixError(std::string(what) + " not positive definite after max jitter");
}

inline double logdet_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// log N(y; mu, Sigma) through a positive-definite factorization.
inline double mvn_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                         const Eigen::MatrixXd& sigma) {
    if (y.size() != mu.size() || sigma.rows() != y.size() || sigma.cols() != y.size())
        throw std::invalid_argument("mvn_logpdf: shape mismatch");
    CholResult c = chol_with_jitter(sigma, 0.0, "covariance");
    const Eigen::VectorXd r = y - mu;
    const double quad = r.dot(c.llt.solve(r));
    return -0.5 * quad - 0.5 * logdet_from_llt(c.llt) -
           0.5 * static_cast<double>(y.size()) * kLog2Pi;
}

}  // namespace sbi
