#pragma once

#include "sbi/gradcheck.hpp"
#include "sbi/optim.hpp"

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace sbi {

struct GradcheckCase {
    std::string design;
    Family family;
    int state_index = 0;
    GradCheckReport report;
};

struct GradcheckSummary {
    bool ok = true;
    std::vector<GradcheckCase> failures;
    int cases_run = 0;
};

// Full-objective gradient check: both particles' assembled ascent direction
// (likelihood score plus signed repulsion) against a five-point finite
// difference, at `states` random prior states per design and family.
// States too close to the |Q1 - Q2| kink are redrawn.
inline GradcheckSummary run_gradcheck_suite(int states = 10, double rel_tol = 1e-4,
                                            double abs_floor = 1e-7,
                                            std::uint64_t seed = 20240501,
                                            std::ostream* log = nullptr) {
    GradcheckSummary summary;
    const double lambda = 1.0;
    EstimandSpec estimand;
    for (const auto& entry : catalog()) {
        const DesignSpec& d = entry.spec;
        const Eigen::Index n = 6;
        for (int k = 0; k < states; ++k) {
            std::uint64_t case_seed = derive_seed(seed, summary.cases_run, k);
            std::optional<optim::ParticlePair> maybe_pair;
            Dataset data;
            for (int attempt = 0;; ++attempt) {
                Rng rng(derive_seed(case_seed, attempt));
                ScmSample s = scm::sample_prior(d, n, rng);
                data = scm::simulate(d, s);
                maybe_pair = optim::init_pair(d, data, estimand, derive_seed(case_seed, 50 + attempt));
                const double q1 = optim::model_q(d, maybe_pair->p1, data, estimand);
                const double q2 = optim::model_q(d, maybe_pair->p2, data, estimand);
                if (std::abs(q1 - q2) > 0.05 * (1.0 + std::abs(q1) + std::abs(q2))) break;
                if (attempt > 20) throw std::runtime_error("gradcheck: no usable state found");
            }
            optim::ParticlePair& pair = *maybe_pair;

            const Eigen::Index p = pair.p1.layout->total();
            const double q1 = optim::model_q(d, pair.p1, data, estimand);
            const double q2 = optim::model_q(d, pair.p2, data, estimand);
            const double sign1 = q1 > q2 ? 1.0 : -1.0;
            Eigen::VectorXd analytic(2 * p);
            analytic.head(p) =
                optim::model_loglik_and_grad(d, pair.p1, data, estimand).grad +
                lambda * sign1 * optim::model_q_grad(d, pair.p1, data, estimand);
            analytic.tail(p) =
                optim::model_loglik_and_grad(d, pair.p2, data, estimand).grad -
                lambda * sign1 * optim::model_q_grad(d, pair.p2, data, estimand);

            auto f = [&](const Eigen::VectorXd& joint) {
                optim::ParticlePair probe{ModelState(pair.p1.layout, joint.head(p)),
                                          ModelState(pair.p2.layout, joint.tail(p))};
                return optim::objective(d, probe, data, lambda, estimand);
            };
            Eigen::VectorXd joint(2 * p);
            joint.head(p) = pair.p1.values;
            joint.tail(p) = pair.p2.values;
            // two step scales per coordinate: small for high-curvature
            // directions (truncation), large where solver round-off
            // dominates; a coordinate passes if either quotient agrees
            Eigen::VectorXd steps_small(2 * p), steps_large(2 * p);
            steps_small.head(p) = fd_steps(*pair.p1.layout, 1e-4, 1e-2);
            steps_small.tail(p) = fd_steps(*pair.p2.layout, 1e-4, 1e-2);
            steps_large.head(p) = fd_steps(*pair.p1.layout, 1e-3, 3e-2);
            steps_large.tail(p) = fd_steps(*pair.p2.layout, 1e-3, 3e-2);
            const Eigen::VectorXd fd_small = fd_gradient_5pt(f, joint, steps_small);
            const Eigen::VectorXd fd_large = fd_gradient_5pt(f, joint, steps_large);

            Eigen::VectorXd fd = fd_small;
            for (Eigen::Index i = 0; i < fd.size(); ++i)
                if (std::abs(analytic[i] - fd_large[i]) < std::abs(analytic[i] - fd_small[i]))
                    fd[i] = fd_large[i];
            GradCheckReport rep = compare_gradients(analytic, fd, rel_tol, abs_floor);
            ++summary.cases_run;
            if (!rep.ok) {
                summary.ok = false;
                summary.failures.push_back({d.name, d.family, k, rep});
                if (log)
                    *log << "FAIL gradcheck " << d.name << "/" << family_name(d.family)
                         << " state " << k << ": idx " << rep.worst_index << " analytic "
                         << rep.analytic_at_worst << " fd " << rep.fd_at_worst << "\n";
            }
        }
        if (log)
            *log << "gradcheck " << d.name << "/" << family_name(d.family) << ": "
                 << states << " states done\n";
    }
    return summary;
}

}  // namespace sbi
