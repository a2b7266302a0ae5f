#pragma once

#include "sbi/optim.hpp"

#include <string>
#include <vector>

namespace sbi::baseline {

struct BaselineConfig {
    int warmup_steps = 500;
    int perturb_steps = 100;
    double delta_s = 0.01;
    int repetitions = 100;
    bool restart_each_rep = false;  // default: keep walking from the last optimum
    int minibatch = 30;
    std::uint64_t seed = 0;
    optim::AdamConfig adam;

    void validate() const {
        if (warmup_steps < 1 || perturb_steps < 1 || repetitions < 1)
            throw std::invalid_argument("baseline steps and repetitions must be positive");
        if (delta_s < 0.0) throw std::invalid_argument("delta_s >= 0 required");
        if (minibatch < 1) throw std::invalid_argument("minibatch >= 1 required");
    }
};

struct ProfileRange {
    double q_min = 0.0;
    double q_max = 0.0;
    double range = 0.0;
    double q_warmup = 0.0;
    int aborted_perturbations = 0;
};

namespace detail {

// single-particle minibatched likelihood ascent; a frozen coordinate keeps
// its Adam moments but receives no gradient
struct Walker {
    const DesignSpec* design;
    const Dataset* data;
    EstimandSpec estimand;
    int minibatch;
    double n_over_b;
    Rng rng;

    Walker(const DesignSpec& d, const Dataset& dat, const EstimandSpec& est, int mb,
           std::uint64_t seed)
        : design(&d), data(&dat), estimand(est), minibatch(mb), n_over_b(1.0), rng(seed) {}

    void steps(ModelState& state, optim::AdamState& adam, int count, Eigen::Index frozen) {
        std::vector<int> batch(static_cast<std::size_t>(minibatch));
        for (int s = 0; s < count; ++s) {
            for (auto& idx : batch)
                idx = static_cast<int>(rng.index(static_cast<std::size_t>(data->n)));
            const double scale = static_cast<double>(data->n) / static_cast<double>(batch.size());
            Eigen::VectorXd g =
                optim::model_loglik_and_grad(*design, state, *data, estimand, &batch, scale).grad;
            if (frozen >= 0) g[frozen] = 0.0;
            optim::adam_step(adam, state.values, g);
        }
    }
};

}  // namespace detail

// Profile-likelihood identifiability probe: maximize the likelihood, then
// for every parameter in turn nudge it by delta_s and re-optimize all the
// others, tracking the spread of implied causal effects.
inline ProfileRange profile_range(const DesignSpec& d, const Dataset& data,
                                  const EstimandSpec& estimand, const BaselineConfig& config) {
    config.validate();
    estimand.validate();

    ModelState warm = optim::init_particle(d, data, estimand, derive_seed(config.seed, 1));
    optim::AdamState warm_adam(warm.layout->total(), config.adam);
    detail::Walker warmup_walker(d, data, estimand, config.minibatch, derive_seed(config.seed, 2));
    warmup_walker.steps(warm, warm_adam, config.warmup_steps, -1);

    ProfileRange out;
    out.q_warmup = optim::model_q(d, warm, data, estimand);
    out.q_min = out.q_max = out.q_warmup;
    auto record = [&](double q) {
        out.q_min = std::min(out.q_min, q);
        out.q_max = std::max(out.q_max, q);
    };

    // theta only: coefficients, log-variances, kernel hyperparameters;
    // confounders and inducing outcomes are re-optimized, never perturbed
    std::vector<Eigen::Index> theta;
    for (const auto& blk : warm.layout->blocks()) {
        if (blk.name == "U" || blk.name == "Ycf") continue;
        for (Eigen::Index j = 0; j < blk.size; ++j) theta.push_back(blk.offset + j);
    }

    for (std::size_t pi = 0; pi < theta.size(); ++pi) {
        const Eigen::Index coord = theta[pi];
        ModelState state = warm;
        optim::AdamState adam = warm_adam;
        detail::Walker walker(d, data, estimand, config.minibatch,
                              derive_seed(config.seed, 100 + pi));
        for (int rep = 0; rep < config.repetitions; ++rep) {
            if (config.restart_each_rep) {
                state = warm;
                adam = warm_adam;
            }
            ModelState before = state;
            optim::AdamState before_adam = adam;
            state.values[coord] += config.delta_s;
            try {
                walker.steps(state, adam, config.perturb_steps, coord);
                record(optim::model_q(d, state, data, estimand));
            } catch (const TrialAbort&) {
                ++out.aborted_perturbations;
                state = std::move(before);
                adam = std::move(before_adam);
            }
        }
    }
    out.range = out.q_max - out.q_min;
    return out;
}

inline ProfileRange profile_range(const std::string& design, const std::string& family,
                                  const Dataset& data, const EstimandSpec& estimand,
                                  const BaselineConfig& config) {
    return profile_range(get_design(design, family), data, estimand, config);
}

}  // namespace sbi::baseline
