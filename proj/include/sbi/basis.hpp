#pragma once

#include "sbi/types.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace sbi {

// Stack-allocated small vector for per-instance basis work (<= 5 features,
// <= 2 parents); keeps the likelihood and estimand inner loops allocation-free.
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 6, 1>;

inline SmallVec basis_eval(Basis basis, const SmallVec& parents) {
    SmallVec out;
    switch (basis) {
        case Basis::Identity:
            return parents;
        case Basis::Quad1: {
            if (parents.size() != 1) throw std::invalid_argument("Quad1 basis needs 1 parent");
            out.resize(2);
            out << parents[0], parents[0] * parents[0];
            return out;
        }
        case Basis::Quad2: {
            if (parents.size() != 2) throw std::invalid_argument("Quad2 basis needs 2 parents");
            const double a = parents[0], b = parents[1];
            out.resize(5);
            out << a, a * a, b, b * b, a * b;
            return out;
        }
        case Basis::QuadTreatmentByCovariate: {
            if (parents.size() != 2)
                throw std::invalid_argument("treatment-by-covariate basis needs 2 parents");
            const double t = parents[0], x = parents[1];
            out.resize(4);
            out << t, x, x * x, t * x;
            return out;
        }
    }
    throw std::logic_error("bad basis");
}

// Partial derivative of the basis vector with respect to parent `wrt`.
inline SmallVec basis_partial(Basis basis, const SmallVec& parents, Eigen::Index wrt) {
    SmallVec out;
    switch (basis) {
        case Basis::Identity:
            out = SmallVec::Zero(parents.size());
            out[wrt] = 1.0;
            return out;
        case Basis::Quad1:
            out.resize(2);
            out << 1.0, 2.0 * parents[0];
            return out;
        case Basis::Quad2: {
            const double a = parents[0], b = parents[1];
            out = SmallVec::Zero(5);
            if (wrt == 0) {
                out[0] = 1.0;
                out[1] = 2.0 * a;
                out[4] = b;
            } else {
                out[2] = 1.0;
                out[3] = 2.0 * b;
                out[4] = a;
            }
            return out;
        }
        case Basis::QuadTreatmentByCovariate: {
            const double t = parents[0], x = parents[1];
            out = SmallVec::Zero(4);
            if (wrt == 0) {
                out[0] = 1.0;
                out[3] = x;
            } else {
                out[1] = 1.0;
                out[2] = 2.0 * x;
                out[3] = t;
            }
            return out;
        }
    }
    throw std::logic_error("bad basis");
}

// Quadratic basis expansion over a parent vector: one parent x -> [x, x^2];
// two parents (a, b) -> [a, a^2, b, b^2, a*b]. With treatment_by_covariate
// the binary treatment stays unexpanded: (T, X) -> [T, X, X^2, T*X].
inline Eigen::VectorXd quadratic_basis(const Eigen::VectorXd& parents,
                                       bool treatment_by_covariate = false) {
    if (parents.size() < 1 || parents.size() > 2)
        throw std::invalid_argument("quadratic basis supports 1 or 2 parents");
    SmallVec p = parents;
    Basis b = treatment_by_covariate ? Basis::QuadTreatmentByCovariate
              : parents.size() == 1  ? Basis::Quad1
                                     : Basis::Quad2;
    return basis_eval(b, p);
}

}  // namespace sbi
