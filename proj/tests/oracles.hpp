#pragma once

// Test-only oracles, deliberately independent of the library's evaluation
// paths: the structural equations are written out per design here, and the
// dense-matrix routines avoid factorizations.

#include "sbi/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace oracle {

inline double det_laplace(const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    if (n == 1) return a(0, 0);
    double det = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::MatrixXd minor(n - 1, n - 1);
        for (Eigen::Index r = 1; r < n; ++r) {
            Eigen::Index cc = 0;
            for (Eigen::Index c = 0; c < n; ++c) {
                if (c == j) continue;
                minor(r - 1, cc++) = a(r, c);
            }
        }
        det += (j % 2 == 0 ? 1.0 : -1.0) * a(0, j) * det_laplace(minor);
    }
    return det;
}

inline Eigen::MatrixXd inverse_gauss_jordan(Eigen::MatrixXd a) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index col = 0; col < n; ++col) {
        Eigen::Index piv = col;
        for (Eigen::Index r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (a(piv, col) == 0.0) throw std::runtime_error("singular matrix in oracle");
        a.row(col).swap(a.row(piv));
        inv.row(col).swap(inv.row(piv));
        const double d = a(col, col);
        a.row(col) /= d;
        inv.row(col) /= d;
        for (Eigen::Index r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            a.row(r) -= f * a.row(col);
            inv.row(r) -= f * inv.row(col);
        }
    }
    return inv;
}

inline double mvn_logpdf_dense(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& sigma) {
    const Eigen::Index n = y.size();
    const Eigen::MatrixXd inv = inverse_gauss_jordan(sigma);
    const double det = det_laplace(sigma);
    const Eigen::VectorXd r = y - mu;
    return -0.5 * r.dot(inv * r) - 0.5 * std::log(det) -
           0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

inline double normal_density(double x, double mean, double var) {
    return std::exp(-(x - mean) * (x - mean) / (2.0 * var)) / std::sqrt(2.0 * M_PI * var);
}

// Per-instance density product with the seven designs' structural equations
// written out explicitly (linear and quadratic families).
inline double loglik_density_product(const std::string& name, const std::string& family,
                                     const sbi::ScmSample& s, const sbi::Dataset& data) {
    const bool quad = family == "quadratic";
    auto p = [&](const std::string& k, int j = 0) { return s.params.at(k)[j]; };
    auto var_of = [&](const std::string& k) { return std::exp(p(k)); };
    auto u_at = [&](Eigen::Index i) {
        if (name == "within_subjects") return s.confounders[data.object_of[i]];
        return s.confounders[i];
    };

    double prod_log = 0.0;
    for (Eigen::Index i = 0; i < data.n; ++i) {
        double density = 1.0;
        if (name == "unconfounded") {
            const double t = data.col("T")[i], y = data.col("Y")[i];
            density *= normal_density(t, 0.0, var_of("log_sigma_T2"));
            const double my = quad ? p("beta_Y", 0) * t + p("beta_Y", 1) * t * t
                                   : p("beta_Y") * t;
            density *= normal_density(y, my, var_of("log_sigma_Y2"));
        } else if (name == "confounded" || name == "within_subjects") {
            const double t = data.col("T")[i], y = data.col("Y")[i], u = u_at(i);
            const double mt = quad ? p("beta_T", 0) * u + p("beta_T", 1) * u * u
                                   : p("beta_T") * u;
            density *= normal_density(t, mt, var_of("log_sigma_T2"));
            const double my = quad ? p("beta_Y", 0) * t + p("beta_Y", 1) * t * t +
                                         p("beta_Y", 2) * u + p("beta_Y", 3) * u * u +
                                         p("beta_Y", 4) * t * u
                                   : p("beta_Y", 0) * t + p("beta_Y", 1) * u;
            density *= normal_density(y, my, var_of("log_sigma_Y2"));
        } else if (name == "backdoor") {
            const double x = data.col("X")[i], t = data.col("T")[i], y = data.col("Y")[i];
            density *= normal_density(x, 0.0, var_of("log_sigma_X2"));
            const double mt = quad ? p("beta_T", 0) * x + p("beta_T", 1) * x * x
                                   : p("beta_T") * x;
            density *= normal_density(t, mt, var_of("log_sigma_T2"));
            const double my = quad ? p("beta_Y", 0) * t + p("beta_Y", 1) * t * t +
                                         p("beta_Y", 2) * x + p("beta_Y", 3) * x * x +
                                         p("beta_Y", 4) * t * x
                                   : p("beta_Y", 0) * t + p("beta_Y", 1) * x;
            density *= normal_density(y, my, var_of("log_sigma_Y2"));
        } else if (name == "frontdoor") {
            const double t = data.col("T")[i], x = data.col("X")[i], y = data.col("Y")[i];
            const double u = u_at(i);
            const double mt = quad ? p("beta_T", 0) * u + p("beta_T", 1) * u * u
                                   : p("beta_T") * u;
            density *= normal_density(t, mt, var_of("log_sigma_T2"));
            const double mx = quad ? p("beta_X", 0) * t + p("beta_X", 1) * t * t
                                   : p("beta_X") * t;
            density *= normal_density(x, mx, var_of("log_sigma_X2"));
            const double my = quad ? p("beta_Y", 0) * x + p("beta_Y", 1) * x * x +
                                         p("beta_Y", 2) * u + p("beta_Y", 3) * u * u +
                                         p("beta_Y", 4) * x * u
                                   : p("beta_Y", 0) * x + p("beta_Y", 1) * u;
            density *= normal_density(y, my, var_of("log_sigma_Y2"));
        } else if (name == "iv") {
            const double iv = data.col("I")[i], t = data.col("T")[i], y = data.col("Y")[i];
            const double u = u_at(i);
            density *= normal_density(iv, 0.0, var_of("log_sigma_I2"));
            const double mt = quad ? p("beta_T", 0) * iv + p("beta_T", 1) * iv * iv +
                                         p("beta_T", 2) * u + p("beta_T", 3) * u * u +
                                         p("beta_T", 4) * iv * u
                                   : p("beta_T", 0) * iv + p("beta_T", 1) * u;
            density *= normal_density(t, mt, var_of("log_sigma_T2"));
            const double my = quad ? p("beta_Y", 0) * t + p("beta_Y", 1) * t * t +
                                         p("beta_Y", 2) * u + p("beta_Y", 3) * u * u +
                                         p("beta_Y", 4) * t * u
                                   : p("beta_Y", 0) * t + p("beta_Y", 1) * u;
            density *= normal_density(y, my, var_of("log_sigma_Y2"));
        } else if (name == "rdd") {
            const double x = data.col("X")[i], t = data.col("T")[i], y = data.col("Y")[i];
            density *= normal_density(x, 0.0, var_of("log_sigma_X2"));
            if (t != (x > 0.0 ? 1.0 : 0.0)) return -INFINITY;
            const double my = quad ? p("beta_Y", 0) * t + p("beta_Y", 1) * x +
                                         p("beta_Y", 2) * x * x + p("beta_Y", 3) * t * x
                                   : p("beta_Y", 0) * t + p("beta_Y", 1) * x;
            density *= normal_density(y, my, var_of("log_sigma_Y2"));
        } else {
            throw std::invalid_argument("oracle: unknown design " + name);
        }
        prod_log += std::log(density);
    }
    return prod_log;
}

// Composite-Simpson integration of the standard normal density in long
// double; reference for the CDF to well below 1e-10.
inline double normal_cdf_simpson(double z) {
    if (z > 9.0) return 1.0;
    if (z < -9.0) return 0.0;
    const int steps = 20000;  // even
    const long double a = 0.0L, b = z;
    const long double h = (b - a) / steps;
    auto phi = [](long double t) {
        return expl(-t * t / 2.0L) / sqrtl(2.0L * 3.14159265358979323846264338327950288L);
    };
    long double acc = phi(a) + phi(b);
    for (int i = 1; i < steps; ++i) acc += (i % 2 ? 4.0L : 2.0L) * phi(a + i * h);
    return static_cast<double>(0.5L + acc * h / 3.0L);
}

}  // namespace oracle

