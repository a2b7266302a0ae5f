#pragma once

#include "sbi/optim.hpp"
#include "sbi/stats_util.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sbi {

// standard normal CDF
inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

// Identifiability decision: TRUE iff Phi((mu - t) sqrt(k) / sd) < p, where
// sd is the sample standard deviation of the per-trial effect gaps (k-1
// denominator). A degenerate sd falls back to comparing the mean with the
// threshold directly.
inline bool decide(double mu, double sd, int k, double t, double p) {
    if (sd <= 0.0) return mu <= t;
    const double z = (mu - t) * std::sqrt(static_cast<double>(k)) / sd;
    return normal_cdf(z) < p;
}

struct ThresholdSpec {
    enum class Mode { FractionOfTrueEffect, Absolute } mode = Mode::FractionOfTrueEffect;
    double value = 0.05;
};

struct SbiConfig {
    Eigen::Index n = 5000;
    int k = 10;
    double lambda = 1.0;
    ThresholdSpec threshold;
    double p = 0.05;
    optim::OptimConfig opt;
    EstimandSpec estimand;
    std::uint64_t seed = 0;
    int jobs = 1;
    double loglik_margin_factor = 2.0;  // warn margin in units of sqrt(n) nats
    int max_trial_retries = 3;

    void validate() const {
        if (n < 1) throw std::invalid_argument("n >= 1 required");
        if (k < 2) throw std::invalid_argument("k >= 2 required (sample variance)");
        if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("p in (0,1) required");
        if (threshold.value < 0.0) throw std::invalid_argument("threshold t >= 0 required");
        if (jobs < 1) throw std::invalid_argument("jobs >= 1 required");
        estimand.validate();
    }
};

struct TrialResult {
    double q1 = 0.0;
    double q2 = 0.0;
    double dq = 0.0;
    double loglik1 = 0.0;
    double loglik2 = 0.0;
    double loglik_star = 0.0;
    double wall_time_s = 0.0;  // in-memory diagnostic, not serialized
    std::uint64_t seed = 0;
    int retries = 0;
};

struct SbiReport {
    std::string design;
    std::string family;
    std::vector<TrialResult> trials;
    double mu_dq = 0.0;
    double sigma_dq = 0.0;
    double z = 0.0;
    double q_star = 0.0;
    double t_used = 0.0;
    double p = 0.0;
    bool identifiable = false;
    int failed_trials = 0;
    bool lambda_warning = false;
    SbiConfig config;
};

// log P(V|F*,U*) of the generating model on a dataset. GP outcomes are
// marginal over the function draw: N(0, K + sigma_y2 I).
inline double star_loglik(const DesignSpec& d, const ScmSample& s, const Dataset& data,
                          const EstimandSpec& estimand) {
    ModelState st = scm::state_from_sample(d, s, data.n, estimand);
    double ll = scm::log_likelihood(d, st, data);
    if (d.gp_outcome) {
        gp::GpEnv e = gp::make_env(d, st, data, estimand);
        Eigen::MatrixXd cov =
            gp::build_blocks(e).ff + e.sigma_y2 * Eigen::MatrixXd::Identity(data.n, data.n);
        ll += mvn_logpdf(data.col(d.outcome_var), Eigen::VectorXd::Zero(data.n), cov);
    }
    return ll;
}

inline double true_effect(const DesignSpec& d, const ScmSample& s, const Dataset& ref_data,
                          const EstimandSpec& estimand) {
    if (d.gp_outcome) return gp::true_effect_gp(d, s, ref_data, estimand);
    return scm::true_effect_parametric(d, s, ref_data, estimand);
}

// One simulation trial: fresh data from the fixed generating model, a fresh
// particle pair, joint optimization, effect extraction.
inline TrialResult run_trial(const DesignSpec& d, const ScmSample& star, const SbiConfig& config,
                             std::uint64_t trial_seed) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng noise_rng(derive_seed(trial_seed, 1));
    ScmSample trial_sample = scm::resample_noise(d, star, config.n, noise_rng);
    Dataset data = scm::simulate(d, trial_sample);

    optim::ParticlePair pair = optim::init_pair(d, data, config.estimand, derive_seed(trial_seed, 2));
    optim::OptimConfig opt = config.opt;
    opt.lambda = config.lambda;
    opt.seed = derive_seed(trial_seed, 3);
    pair = optim::optimize(d, pair, data, opt, config.estimand);

    TrialResult res;
    res.seed = trial_seed;
    res.q1 = optim::model_q(d, pair.p1, data, config.estimand);
    res.q2 = optim::model_q(d, pair.p2, data, config.estimand);
    res.dq = std::abs(res.q1 - res.q2);
    res.loglik1 = optim::model_loglik(d, pair.p1, data, config.estimand);
    res.loglik2 = optim::model_loglik(d, pair.p2, data, config.estimand);
    res.loglik_star = star_loglik(d, trial_sample, data, config.estimand);
    res.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// Full identifiability test: one generating model, k trials, the
// threshold decision over the trial gaps.
inline SbiReport run(const DesignSpec& d, const SbiConfig& config) {
    config.validate();
    SbiReport report;
    report.design = d.name;
    report.family = family_name(d.family);
    report.config = config;
    report.p = config.p;

    Rng star_rng(derive_seed(config.seed, 0));
    ScmSample star = scm::sample_prior(d, config.n, star_rng);
    Dataset ref_data = scm::simulate(d, star);
    report.q_star = true_effect(d, star, ref_data, config.estimand);
    star.q_star = report.q_star;
    report.t_used = config.threshold.mode == ThresholdSpec::Mode::FractionOfTrueEffect
                        ? config.threshold.value * std::abs(report.q_star)
                        : config.threshold.value;

    report.trials.resize(static_cast<std::size_t>(config.k));
    std::atomic<int> failed{0};
    std::atomic<std::size_t> next{0};
    std::atomic<bool> fatal{false};
    std::string fatal_message;
    std::mutex fatal_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= report.trials.size() || fatal.load()) {
                if (i >= report.trials.size()) return;
                continue;
            }
            TrialResult res;
            bool done = false;
            for (int attempt = 0; attempt <= config.max_trial_retries && !done; ++attempt) {
                const std::uint64_t trial_seed =
                    derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(i), attempt);
                try {
                    res = run_trial(d, star, config, trial_seed);
                    res.retries = attempt;
                    done = true;
                } catch (const TrialAbort&) {
                    failed.fetch_add(1);
                }
            }
            if (!done) {
                std::lock_guard<std::mutex> lock(fatal_mutex);
                fatal.store(true);
                fatal_message = "trial " + std::to_string(i) + " aborted after retries";
            } else {
                report.trials[i] = res;
            }
        }
    };

    if (config.jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < config.jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (fatal.load()) throw TrialAbort(fatal_message);
    report.failed_trials = failed.load();

    std::vector<double> gaps;
    gaps.reserve(report.trials.size());
    const double margin = config.loglik_margin_factor * std::sqrt(static_cast<double>(config.n));
    for (const auto& tr : report.trials) {
        gaps.push_back(tr.dq);
        if (std::min(tr.loglik1, tr.loglik2) < tr.loglik_star - margin)
            report.lambda_warning = true;
    }
    report.mu_dq = mean_of(gaps);
    report.sigma_dq = sample_sd(gaps);
    report.z = report.sigma_dq > 0.0
                   ? (report.mu_dq - report.t_used) * std::sqrt(static_cast<double>(config.k)) /
                         report.sigma_dq
                   : (report.mu_dq <= report.t_used ? -INFINITY : INFINITY);
    report.identifiable = decide(report.mu_dq, report.sigma_dq, config.k, report.t_used, config.p);
    return report;
}

inline SbiReport run(const std::string& design, const std::string& family,
                     const SbiConfig& config) {
    return run(get_design(design, family), config);
}

// ---------------------------------------------------------------------------
// Likelihood-ratio diagnostic

struct DiagnosticPoint {
    Eigen::Index n = 0;
    double mean_log_lr = 0.0;
};

// Mean log-likelihood ratio of a perturbed model against the generating one
// as the sample size grows. Coefficients are shifted by `delta`; the
// confounders and variances are shared. A consistent model family drives
// this to -infinity linearly in n.
inline std::vector<DiagnosticPoint> likelihood_ratio_diagnostic(
    const DesignSpec& d, const std::vector<Eigen::Index>& n_grid, int reps, double delta,
    std::uint64_t seed) {
    if (d.family == Family::Gp)
        throw std::invalid_argument("likelihood_ratio_diagnostic: parametric families only");
    std::vector<DiagnosticPoint> out;
    for (Eigen::Index n : n_grid) {
        double acc = 0.0;
        for (int r = 0; r < reps; ++r) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n), r));
            ScmSample s = scm::sample_prior(d, n, rng);
            Dataset data = scm::simulate(d, s);
            ScmSample perturbed = s;
            for (auto& [name, v] : perturbed.params)
                if (name.rfind("beta", 0) == 0) v.array() += delta;
            const double ll_star = scm::log_likelihood(d, s.params, s.confounders, data);
            const double ll_pert =
                scm::log_likelihood(d, perturbed.params, perturbed.confounders, data);
            acc += ll_pert - ll_star;
        }
        out.push_back({n, acc / reps});
    }
    return out;
}

}  // namespace sbi
