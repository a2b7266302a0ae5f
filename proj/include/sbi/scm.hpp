#pragma once

#include "sbi/basis.hpp"
#include "sbi/designs.hpp"
#include "sbi/gp_kernel.hpp"
#include "sbi/layout.hpp"
#include "sbi/rng.hpp"
#include "sbi/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace sbi::scm {

inline Eigen::Index confounder_count(const DesignSpec& d, Eigen::Index n) {
    switch (d.confounder.kind) {
        case ConfounderSpec::Kind::None: return 0;
        case ConfounderSpec::Kind::Iid: return n;
        case ConfounderSpec::Kind::PerObject:
            return (n + d.confounder.group_size - 1) / d.confounder.group_size;
    }
    throw std::logic_error("bad confounder kind");
}

// instance -> confounder index; identity unless the design shares
// confounders per object
inline Eigen::Index confounder_index(const DesignSpec& d, const Dataset& data, Eigen::Index i) {
    if (d.confounder.kind == ConfounderSpec::Kind::PerObject)
        return data.object_of.empty() ? i / d.confounder.group_size : data.object_of[i];
    return i;
}

inline Eigen::Index ycf_size(Eigen::Index n, const EstimandSpec& estimand) {
    return 2 * n + (estimand.kind == EstimandKind::Cate ? 2 : 0);
}

// Free-parameter layout for one candidate model: coefficients and
// log-variances in equation order, kernel hyperparameters, confounders,
// then inducing counterfactual outcomes (GP only).
inline LayoutPtr make_layout(const DesignSpec& d, Eigen::Index n, const EstimandSpec& estimand) {
    auto layout = std::make_shared<ParamLayout>();
    for (const auto& e : d.equations)
        if (!e.coeff.empty()) layout->add(e.coeff, d.param_priors.at(e.coeff).mean.size());
    for (const auto& e : d.equations)
        if (!e.noise_log_var.empty()) layout->add(e.noise_log_var, 1);
    if (d.gp_outcome) {
        for (const auto& dim : d.gp_outcome->kernel_dims) {
            layout->add("log_l_" + dim, 1);
            layout->add("log_s_" + dim, 1);
        }
        layout->add("log_sigma_Y2", 1);
    }
    const Eigen::Index nc = confounder_count(d, n);
    if (nc > 0) layout->add("U", nc);
    if (d.gp_outcome) layout->add("Ycf", ycf_size(n, estimand));
    return layout;
}

// ---------------------------------------------------------------------------
// Prior sampling and simulation

inline ScmSample sample_prior(const DesignSpec& d, Eigen::Index n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_prior: n >= 1 required");
    ScmSample s;
    // map order (alphabetical in the parameter name) fixes the draw sequence
    for (const auto& [name, prior] : d.param_priors) {
        Eigen::VectorXd v(prior.mean.size());
        for (Eigen::Index j = 0; j < v.size(); ++j)
            v[j] = rng.normal(prior.mean[j], std::sqrt(prior.var));
        s.params[name] = v;
    }
    const Eigen::Index nc = confounder_count(d, n);
    if (nc > 0) s.confounders = rng.normal_vec(nc, 0.0, std::sqrt(d.confounder.var));
    for (const auto& e : d.equations) {
        if (e.noise_log_var.empty()) continue;
        const double sd = std::sqrt(std::exp(s.params.at(e.noise_log_var)[0]));
        s.noise[e.output] = rng.normal_vec(n, 0.0, sd);
    }
    if (d.gp_outcome) {
        // standard-normal draws; simulate() maps them through the kernel
        // Cholesky. z_cf is sized for a possible CATE conditioning pair.
        s.noise["z_Y"] = rng.normal_vec(n);
        s.noise["z_cf"] = rng.normal_vec(2 * n + 2);
    }
    return s;
}

// Fresh exogenous noise (and outcome draw) under the same parameters and
// confounders.
inline ScmSample resample_noise(const DesignSpec& d, const ScmSample& sample, Eigen::Index n,
                                Rng& rng) {
    ScmSample s = sample;
    for (const auto& e : d.equations) {
        if (e.noise_log_var.empty()) continue;
        const double sd = std::sqrt(std::exp(s.params.at(e.noise_log_var)[0]));
        s.noise[e.output] = rng.normal_vec(n, 0.0, sd);
    }
    if (d.gp_outcome) {
        s.noise["z_Y"] = rng.normal_vec(n);
        s.noise["z_cf"] = rng.normal_vec(2 * n + 2);
    }
    return s;
}

inline Eigen::Index sample_n(const DesignSpec& d, const ScmSample& s) {
    for (const auto& e : d.equations)
        if (!e.noise_log_var.empty()) return s.noise.at(e.output).size();
    throw std::logic_error("design has no stochastic equation");
}

namespace detail {

inline ProductKernelHyper kernel_hyper_from_params(
    const DesignSpec& d, const std::function<double(const std::string&)>& scalar) {
    const auto& dims = d.gp_outcome->kernel_dims;
    ProductKernelHyper h;
    h.l_t = std::exp(scalar("log_l_" + dims[0]));
    h.s_t = std::exp(scalar("log_s_" + dims[0]));
    if (dims.size() > 1) {
        h.has_second = true;
        h.l_2 = std::exp(scalar("log_l_" + dims[1]));
        h.s_2 = std::exp(scalar("log_s_" + dims[1]));
    }
    return h;
}

// second kernel dimension values per instance (confounder expanded per
// object, or an observed covariate column)
inline Eigen::VectorXd second_dim_values(const DesignSpec& d, const Dataset& data,
                                         const Eigen::VectorXd& confounders) {
    const std::string& dim = d.gp_outcome->kernel_dims[1];
    Eigen::VectorXd out(data.n);
    if (dim == d.confounder_var) {
        for (Eigen::Index i = 0; i < data.n; ++i)
            out[i] = confounders[confounder_index(d, data, i)];
    } else {
        out = data.col(dim);
    }
    return out;
}

}  // namespace detail

// Evaluate the structural equations in order; latent variables stay out of
// the returned columns. GP outcomes are drawn through the factual kernel.
inline Dataset simulate(const DesignSpec& d, const ScmSample& s) {
    const Eigen::Index n = sample_n(d, s);
    Dataset data;
    data.n = n;
    if (d.confounder.kind == ConfounderSpec::Kind::PerObject) {
        data.object_of.resize(n);
        for (Eigen::Index i = 0; i < n; ++i)
            data.object_of[i] = static_cast<int>(i / d.confounder.group_size);
    }

    std::map<std::string, Eigen::VectorXd> values;
    auto value_of = [&](const std::string& var, Eigen::Index i) -> double {
        if (var == d.confounder_var) return s.confounders[confounder_index(d, data, i)];
        return values.at(var)[i];
    };

    for (const auto& e : d.equations) {
        Eigen::VectorXd col(n);
        if (e.indicator) {
            const Eigen::VectorXd& x = values.at(e.parents[0]);
            for (Eigen::Index i = 0; i < n; ++i) col[i] = x[i] > 0.0 ? 1.0 : 0.0;
        } else {
            const Eigen::VectorXd* beta = e.coeff.empty() ? nullptr : &s.params.at(e.coeff);
            const Eigen::VectorXd& eps = s.noise.at(e.output);
            SmallVec pv(static_cast<Eigen::Index>(e.parents.size()));
            for (Eigen::Index i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < e.parents.size(); ++p)
                    pv[static_cast<Eigen::Index>(p)] = value_of(e.parents[p], i);
                double mean = 0.0;
                if (beta) mean = beta->dot(basis_eval(e.basis, pv));
                col[i] = mean + eps[i];
            }
        }
        values[e.output] = col;
    }

    for (const auto& v : d.observed_vars)
        if (values.count(v)) data.columns[v] = values[v];

    if (d.gp_outcome) {
        auto scalar = [&](const std::string& name) { return s.params.at(name)[0]; };
        const ProductKernelHyper h = detail::kernel_hyper_from_params(d, scalar);
        const double sigma_y2 = std::exp(scalar("log_sigma_Y2"));
        const Eigen::VectorXd t = values.at(d.treatment_var);
        Eigen::VectorXd second;
        const Eigen::VectorXd* second_ptr = nullptr;
        if (h.has_second) {
            second = detail::second_dim_values(d, data, s.confounders);
            second_ptr = &second;
        }
        Eigen::MatrixXd cov = product_kernel(t, second_ptr, t, second_ptr, h);
        cov.diagonal().array() += sigma_y2;
        CholResult c = chol_with_jitter(cov, 0.0, "outcome covariance");
        data.columns[d.outcome_var] =
            c.llt.matrixL() * s.noise.at("z_Y").head(n);
    }
    return data;
}

// ---------------------------------------------------------------------------
// Parametric log-likelihood and score

namespace detail {

struct EqEval {
    const Equation* eq = nullptr;
    SmallVec beta;
    double log_var = 0.0;
    double var = 1.0;
    const Eigen::VectorXd* out_col = nullptr;
    std::vector<const Eigen::VectorXd*> parent_cols;  // nullptr entry = confounder
    int conf_parent = -1;
};

inline std::vector<EqEval> prepare_equations(const DesignSpec& d, const ModelState& state,
                                             const Dataset& data) {
    std::vector<EqEval> evals;
    for (const auto& e : d.equations) {
        EqEval ev;
        ev.eq = &e;
        if (!e.coeff.empty()) ev.beta = state.seg(e.coeff);
        if (!e.noise_log_var.empty()) {
            ev.log_var = state.scalar(e.noise_log_var);
            ev.var = std::exp(ev.log_var);
        }
        ev.out_col = &data.col(e.output);
        for (std::size_t p = 0; p < e.parents.size(); ++p) {
            if (e.parents[p] == d.confounder_var) {
                ev.parent_cols.push_back(nullptr);
                ev.conf_parent = static_cast<int>(p);
            } else {
                ev.parent_cols.push_back(&data.col(e.parents[p]));
            }
        }
        evals.push_back(std::move(ev));
    }
    return evals;
}

inline void gather_parents(const EqEval& ev, const DesignSpec& d, const Dataset& data,
                           const Eigen::VectorXd& confounders, Eigen::Index i, SmallVec& pv) {
    pv.resize(static_cast<Eigen::Index>(ev.parent_cols.size()));
    for (std::size_t p = 0; p < ev.parent_cols.size(); ++p) {
        pv[static_cast<Eigen::Index>(p)] =
            ev.parent_cols[p] ? (*ev.parent_cols[p])[i]
                              : confounders[confounder_index(d, data, i)];
    }
}

}  // namespace detail

// Sum over stochastic observed equations of per-instance Gaussian log
// densities; the deterministic indicator contributes 0 when the data is
// consistent with it and -inf otherwise. `batch` restricts the instance
// set; `scale` multiplies the result (minibatch upscaling).
inline double log_likelihood(const DesignSpec& d, const ModelState& state, const Dataset& data,
                             const std::vector<int>* batch = nullptr, double scale = 1.0) {
    const auto evals = detail::prepare_equations(d, state, data);
    const Eigen::VectorXd confounders =
        state.has("U") ? Eigen::VectorXd(state.seg("U")) : Eigen::VectorXd();
    const Eigen::Index nb = batch ? static_cast<Eigen::Index>(batch->size()) : data.n;
    double ll = 0.0;
    SmallVec pv;
    for (const auto& ev : evals) {
        const Equation& e = *ev.eq;
        if (e.indicator) {
            const Eigen::VectorXd& x = data.col(e.parents[0]);
            const Eigen::VectorXd& t = *ev.out_col;
            for (Eigen::Index bi = 0; bi < nb; ++bi) {
                const Eigen::Index i = batch ? (*batch)[bi] : bi;
                const double want = x[i] > 0.0 ? 1.0 : 0.0;
                if (std::abs(t[i] - want) > 0.5)
                    return -std::numeric_limits<double>::infinity();
            }
            continue;
        }
        if (e.noise_log_var.empty()) continue;
        double rss = 0.0;
        for (Eigen::Index bi = 0; bi < nb; ++bi) {
            const Eigen::Index i = batch ? (*batch)[bi] : bi;
            detail::gather_parents(ev, d, data, confounders, i, pv);
            const double mean = ev.beta.size() ? ev.beta.dot(basis_eval(e.basis, pv)) : 0.0;
            const double r = (*ev.out_col)[i] - mean;
            rss += r * r;
        }
        ll += -0.5 * static_cast<double>(nb) * (kLog2Pi + ev.log_var) - rss / (2.0 * ev.var);
    }
    return scale * ll;
}

// Exact score of log_likelihood with respect to every coefficient, every
// log-variance and every confounder value, as a flat vector over the
// state's layout.
inline Eigen::VectorXd log_likelihood_grad(const DesignSpec& d, const ModelState& state,
                                           const Dataset& data,
                                           const std::vector<int>* batch = nullptr,
                                           double scale = 1.0) {
    const auto evals = detail::prepare_equations(d, state, data);
    const Eigen::VectorXd confounders =
        state.has("U") ? Eigen::VectorXd(state.seg("U")) : Eigen::VectorXd();
    const Eigen::Index nb = batch ? static_cast<Eigen::Index>(batch->size()) : data.n;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.layout->total());
    SmallVec pv;
    for (const auto& ev : evals) {
        const Equation& e = *ev.eq;
        if (e.indicator || e.noise_log_var.empty()) continue;
        double g_w = 0.0;
        SmallVec g_beta = SmallVec::Zero(ev.beta.size());
        const Eigen::Index u_off = ev.conf_parent >= 0 ? state.layout->block("U").offset : 0;
        for (Eigen::Index bi = 0; bi < nb; ++bi) {
            const Eigen::Index i = batch ? (*batch)[bi] : bi;
            detail::gather_parents(ev, d, data, confounders, i, pv);
            const SmallVec phi = basis_eval(e.basis, pv);
            const double mean = ev.beta.size() ? ev.beta.dot(phi) : 0.0;
            const double r = (*ev.out_col)[i] - mean;
            if (ev.beta.size()) g_beta += (r / ev.var) * phi;
            g_w += -0.5 + r * r / (2.0 * ev.var);
            if (ev.conf_parent >= 0) {
                const SmallVec dphi = basis_partial(e.basis, pv, ev.conf_parent);
                grad[u_off + confounder_index(d, data, i)] +=
                    scale * (r / ev.var) * ev.beta.dot(dphi);
            }
        }
        if (!e.coeff.empty()) state.layout->seg(grad, e.coeff) += scale * Eigen::VectorXd(g_beta);
        grad[state.layout->block(e.noise_log_var).offset] += scale * g_w;
    }
    return grad;
}

// Overload matching the (params, confounders) calling convention.
inline double log_likelihood(const DesignSpec& d,
                             const std::map<std::string, Eigen::VectorXd>& params,
                             const Eigen::VectorXd& confounders, const Dataset& data) {
    EstimandSpec est;
    auto layout = make_layout(d, data.n, est);
    ModelState state(layout);
    for (const auto& [name, v] : params)
        if (layout->has(name)) state.seg(name) = v;
    if (layout->has("U")) state.seg("U") = confounders;
    return log_likelihood(d, state, data);
}

// ---------------------------------------------------------------------------
// Counterfactuals and estimands (parametric families)

inline std::set<std::string> descendants(const DesignSpec& d, const std::string& var) {
    std::set<std::string> out{var};
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& e : d.equations) {
            if (out.count(e.output)) continue;
            for (const auto& p : e.parents) {
                if (out.count(p)) {
                    out.insert(e.output);
                    changed = true;
                    break;
                }
            }
        }
    }
    out.erase(var);
    return out;
}

namespace detail {

// Counterfactual columns under do(T = tau). Noise is reused by abduction:
// each stochastic descendant keeps the residual implied by the model and
// the observed data, so v_cf = mean(cf parents) - mean(factual parents) + v.
inline std::map<std::string, Eigen::VectorXd> counterfactual_values(
    const DesignSpec& d, const ModelState& state, const Dataset& data, double tau) {
    const std::set<std::string> desc = descendants(d, d.treatment_var);
    const Eigen::VectorXd confounders =
        state.has("U") ? Eigen::VectorXd(state.seg("U")) : Eigen::VectorXd();
    std::map<std::string, Eigen::VectorXd> cf;
    cf[d.treatment_var] = Eigen::VectorXd::Constant(data.n, tau);

    auto cf_value = [&](const std::string& var, Eigen::Index i) -> double {
        if (auto it = cf.find(var); it != cf.end()) return it->second[i];
        if (var == d.confounder_var) return confounders[confounder_index(d, data, i)];
        return data.col(var)[i];
    };
    auto fact_value = [&](const std::string& var, Eigen::Index i) -> double {
        if (var == d.confounder_var) return confounders[confounder_index(d, data, i)];
        return data.col(var)[i];
    };

    for (const auto& e : d.equations) {
        if (e.output == d.treatment_var || !desc.count(e.output)) continue;
        Eigen::VectorXd col(data.n);
        SmallVec pv_cf(static_cast<Eigen::Index>(e.parents.size()));
        SmallVec pv_f(static_cast<Eigen::Index>(e.parents.size()));
        const SmallVec beta = e.coeff.empty() ? SmallVec() : SmallVec(state.seg(e.coeff));
        for (Eigen::Index i = 0; i < data.n; ++i) {
            for (std::size_t p = 0; p < e.parents.size(); ++p) {
                pv_cf[static_cast<Eigen::Index>(p)] = cf_value(e.parents[p], i);
                pv_f[static_cast<Eigen::Index>(p)] = fact_value(e.parents[p], i);
            }
            if (e.indicator) {
                col[i] = pv_cf[0] > 0.0 ? 1.0 : 0.0;
            } else {
                const double mean_cf = beta.size() ? beta.dot(basis_eval(e.basis, pv_cf)) : 0.0;
                const double mean_f = beta.size() ? beta.dot(basis_eval(e.basis, pv_f)) : 0.0;
                col[i] = mean_cf - mean_f + data.col(e.output)[i];
            }
        }
        cf[e.output] = col;
    }
    return cf;
}

}  // namespace detail

inline ModelState state_from_sample(const DesignSpec& d, const ScmSample& s, Eigen::Index n,
                                    const EstimandSpec& estimand) {
    auto layout = make_layout(d, n, estimand);
    ModelState state(layout);
    for (const auto& [name, v] : s.params)
        if (layout->has(name)) state.seg(name) = v;
    if (layout->has("U")) state.seg("U") = s.confounders;
    return state;
}

// Counterfactual outcome pair (Y under do(T=t'), Y under do(T=t'')) for the
// parametric families; confounders and noise are the sample's own.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> counterfactual_outcomes(
    const DesignSpec& d, const ScmSample& s, const Dataset& data, const EstimandSpec& estimand) {
    if (d.family == Family::Gp)
        throw std::invalid_argument(
            "counterfactual_outcomes: gp outcomes are inducing variables, not derived");
    estimand.validate();
    const ModelState state = state_from_sample(d, s, data.n, estimand);
    auto cf1 = detail::counterfactual_values(d, state, data, estimand.t_prime);
    auto cf2 = detail::counterfactual_values(d, state, data, estimand.t_double_prime);
    return {cf1.at(d.outcome_var), cf2.at(d.outcome_var)};
}

// Mean difference of counterfactual outcomes. CATE callers pass the
// conditioning instance(s) only, so the same normalized form applies.
inline double estimand_value(const EstimandSpec& estimand, const Eigen::VectorXd& y_prime,
                             const Eigen::VectorXd& y_double_prime) {
    (void)estimand;
    if (y_prime.size() == 0) throw std::invalid_argument("estimand_value: empty vectors");
    if (y_prime.size() != y_double_prime.size())
        throw std::invalid_argument("estimand_value: length mismatch");
    return (y_prime - y_double_prime).mean();
}

namespace detail {

// Single synthetic instance for a CATE query: exogenous noise zero,
// confounder at its prior mean, conditioning covariate forced to x. Returns
// values and (optionally) per-direction sensitivities for the coefficient
// blocks in `dirs`.
struct CateEval {
    double q = 0.0;
    Eigen::VectorXd grad;  // over layout, coefficient blocks only
};

inline CateEval cate_evaluate(const DesignSpec& d, const ModelState& state,
                              const EstimandSpec& estimand, bool want_grad) {
    struct Dir {
        std::string coeff;
        Eigen::Index j;
        Eigen::Index flat;
    };
    std::vector<Dir> dirs;
    if (want_grad) {
        for (const auto& e : d.equations) {
            if (e.coeff.empty()) continue;
            const auto& b = state.layout->block(e.coeff);
            for (Eigen::Index j = 0; j < b.size; ++j) dirs.push_back({e.coeff, j, b.offset + j});
        }
    }
    const Eigen::Index nd = static_cast<Eigen::Index>(dirs.size());

    // values + sensitivities for one pass of the equations, with optional
    // forced variables (conditioning covariate, then the treatment)
    auto evaluate = [&](const std::map<std::string, double>& forced,
                        std::map<std::string, double>& val,
                        std::map<std::string, Eigen::VectorXd>& sens) {
        for (const auto& e : d.equations) {
            if (auto it = forced.find(e.output); it != forced.end()) {
                val[e.output] = it->second;
                sens[e.output] = Eigen::VectorXd::Zero(nd);
                continue;
            }
            SmallVec pv(static_cast<Eigen::Index>(e.parents.size()));
            for (std::size_t p = 0; p < e.parents.size(); ++p) {
                const std::string& par = e.parents[p];
                pv[static_cast<Eigen::Index>(p)] = par == d.confounder_var ? 0.0 : val.at(par);
            }
            if (e.indicator) {
                val[e.output] = pv[0] > 0.0 ? 1.0 : 0.0;
                sens[e.output] = Eigen::VectorXd::Zero(nd);
                continue;
            }
            const SmallVec beta = e.coeff.empty() ? SmallVec() : SmallVec(state.seg(e.coeff));
            const SmallVec phi = basis_eval(e.basis, pv);
            val[e.output] = beta.size() ? beta.dot(phi) : 0.0;
            Eigen::VectorXd sv = Eigen::VectorXd::Zero(nd);
            for (Eigen::Index k = 0; k < nd; ++k) {
                double acc = 0.0;
                if (dirs[k].coeff == e.coeff) acc += phi[dirs[k].j];
                for (std::size_t p = 0; p < e.parents.size(); ++p) {
                    const std::string& par = e.parents[p];
                    if (par == d.confounder_var) continue;
                    const double ps = sens.at(par)[k];
                    if (ps != 0.0 && beta.size())
                        acc += beta.dot(basis_partial(e.basis, pv, static_cast<Eigen::Index>(p))) * ps;
                }
                sv[k] = acc;
            }
            sens[e.output] = sv;
        }
    };

    auto arm = [&](double tau, double& y, Eigen::VectorXd& ys) {
        std::map<std::string, double> val;
        std::map<std::string, Eigen::VectorXd> sens;
        std::map<std::string, double> forced{{estimand.conditioning_var, estimand.conditioning_value},
                                             {estimand.treatment_var, tau}};
        evaluate(forced, val, sens);
        y = val.at(d.outcome_var);
        ys = sens.at(d.outcome_var);
    };

    double y1 = 0.0, y2 = 0.0;
    Eigen::VectorXd s1, s2;
    arm(estimand.t_prime, y1, s1);
    arm(estimand.t_double_prime, y2, s2);
    CateEval out;
    out.q = y1 - y2;
    if (want_grad) {
        out.grad = Eigen::VectorXd::Zero(state.layout->total());
        for (Eigen::Index k = 0; k < nd; ++k) out.grad[dirs[k].flat] = s1[k] - s2[k];
    }
    return out;
}

}  // namespace detail

struct QEval {
    double q = 0.0;
    Eigen::VectorXd grad;  // empty unless requested
};

namespace detail {

// Scalar recursion for all-Identity chains: with linear means the
// counterfactual contrast per instance is the same number, so the effect and
// its gradient never need the data.
inline QEval identity_chain_q(const DesignSpec& d, const ModelState& state,
                              const std::vector<const Equation*>& chain,
                              const EstimandSpec& estimand, bool want_grad) {
    const double dt = estimand.t_prime - estimand.t_double_prime;
    std::map<std::string, double> contrast;  // per recomputed variable
    std::map<std::string, SmallVec> dpa;     // per-parent contrast, for the reverse pass
    for (const Equation* e : chain) {
        SmallVec dp = SmallVec::Zero(static_cast<Eigen::Index>(e->parents.size()));
        for (std::size_t p = 0; p < e->parents.size(); ++p) {
            const std::string& par = e->parents[p];
            if (par == d.treatment_var)
                dp[static_cast<Eigen::Index>(p)] = dt;
            else if (auto it = contrast.find(par); it != contrast.end())
                dp[static_cast<Eigen::Index>(p)] = it->second;
        }
        const SmallVec beta = e->coeff.empty() ? SmallVec() : SmallVec(state.seg(e->coeff));
        contrast[e->output] = beta.size() ? beta.dot(dp) : 0.0;
        dpa[e->output] = dp;
    }
    QEval out;
    out.q = contrast.at(d.outcome_var);
    if (!want_grad) return out;
    out.grad = Eigen::VectorXd::Zero(state.layout->total());
    std::map<std::string, double> adj;
    adj[d.outcome_var] = 1.0;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        const Equation* e = *it;
        const auto a_it = adj.find(e->output);
        if (a_it == adj.end() || e->coeff.empty()) continue;
        const double a = a_it->second;
        const SmallVec beta = state.seg(e->coeff);
        const SmallVec& dp = dpa.at(e->output);
        state.layout->seg(out.grad, e->coeff) += a * Eigen::VectorXd(dp);
        for (std::size_t p = 0; p < e->parents.size(); ++p) {
            const std::string& par = e->parents[p];
            if (par != d.treatment_var && contrast.count(par))
                adj[par] += a * beta[static_cast<Eigen::Index>(p)];
        }
    }
    return out;
}

}  // namespace detail

// Fused causal-effect value and gradient for the parametric families.
// Column sources are resolved once and the per-instance loops are
// specialized per basis; this runs every optimizer step on the full data.
inline QEval parametric_q_eval(const DesignSpec& d, const ModelState& state, const Dataset& data,
                               const EstimandSpec& estimand, bool want_grad) {
    QEval out;
    if (estimand.kind == EstimandKind::Cate) {
        auto c = detail::cate_evaluate(d, state, estimand, want_grad);
        out.q = c.q;
        out.grad = std::move(c.grad);
        return out;
    }

    const std::set<std::string> desc = descendants(d, d.treatment_var);
    std::vector<const Equation*> chain;
    bool all_identity = true;
    for (const auto& e : d.equations) {
        if (e.output == d.treatment_var || !desc.count(e.output)) continue;
        chain.push_back(&e);
        if (e.basis != Basis::Identity || e.indicator) all_identity = false;
    }
    if (all_identity) return detail::identity_chain_q(d, state, chain, estimand, want_grad);

    if (want_grad) out.grad = Eigen::VectorXd::Zero(state.layout->total());
    const Eigen::Index n = data.n;
    const Eigen::Index u_off = state.has("U") ? state.layout->block("U").offset : 0;

    // expanded confounder values and instance -> confounder index
    Eigen::VectorXd u_expanded;
    std::vector<Eigen::Index> cmap;
    if (state.has("U")) {
        const auto u = state.seg("U");
        u_expanded.resize(n);
        cmap.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index c = confounder_index(d, data, i);
            cmap[static_cast<std::size_t>(i)] = c;
            u_expanded[i] = u[c];
        }
    }

    struct Node {
        const Equation* eq;
        Basis basis;
        SmallVec beta;
        const double* out_col;
        int np = 0;
        std::array<const double*, 2> fact{};
        std::array<const double*, 2> cfp{};   // filled per arm
        std::array<int, 2> chain_idx{};       // adjoint routing, -1 = none
        std::array<bool, 2> is_conf{};
        std::array<bool, 2> is_treat{};
        Eigen::VectorXd cf, adj;
    };
    std::vector<Node> nodes;
    Eigen::VectorXd tau_col(n);
    for (const Equation* e : chain) {
        Node node;
        node.eq = e;
        node.basis = e->basis;
        if (!e->coeff.empty()) node.beta = state.seg(e->coeff);
        node.out_col = data.col(e->output).data();
        node.np = static_cast<int>(e->parents.size());
        node.cf.resize(n);
        for (int p = 0; p < node.np; ++p) {
            const std::string& par = e->parents[static_cast<std::size_t>(p)];
            node.chain_idx[static_cast<std::size_t>(p)] = -1;
            if (par == d.confounder_var) {
                node.is_conf[static_cast<std::size_t>(p)] = true;
                node.fact[static_cast<std::size_t>(p)] = u_expanded.data();
            } else if (par == d.treatment_var) {
                node.is_treat[static_cast<std::size_t>(p)] = true;
                node.fact[static_cast<std::size_t>(p)] = data.col(par).data();
            } else {
                node.fact[static_cast<std::size_t>(p)] = data.col(par).data();
                if (desc.count(par))
                    for (std::size_t c = 0; c < nodes.size(); ++c)
                        if (nodes[c].eq->output == par)
                            node.chain_idx[static_cast<std::size_t>(p)] = static_cast<int>(c);
            }
        }
        nodes.push_back(std::move(node));
    }

    double q_acc = 0.0;
    for (double tau : {estimand.t_prime, estimand.t_double_prime}) {
        const double sign = (tau == estimand.t_prime) ? 1.0 : -1.0;
        tau_col.setConstant(tau);
        for (auto& node : nodes) {
            for (int p = 0; p < node.np; ++p) {
                const std::size_t sp = static_cast<std::size_t>(p);
                if (node.is_treat[sp])
                    node.cfp[sp] = tau_col.data();
                else if (node.chain_idx[sp] >= 0)
                    node.cfp[sp] = nodes[static_cast<std::size_t>(node.chain_idx[sp])].cf.data();
                else
                    node.cfp[sp] = node.fact[sp];
            }
            const double* b = node.beta.data();
            double* cf = node.cf.data();
            const double* outc = node.out_col;
            const double* f0 = node.fact[0];
            const double* c0 = node.cfp[0];
            const double* f1 = node.np > 1 ? node.fact[1] : nullptr;
            const double* c1 = node.np > 1 ? node.cfp[1] : nullptr;
            switch (node.basis) {
                case Basis::Quad1:
                    for (Eigen::Index i = 0; i < n; ++i) {
                        const double xc = c0[i], xf = f0[i];
                        cf[i] = b[0] * (xc - xf) + b[1] * (xc * xc - xf * xf) + outc[i];
                    }
                    break;
                case Basis::Quad2:
                    for (Eigen::Index i = 0; i < n; ++i) {
                        const double ac = c0[i], af = f0[i], bc = c1[i], bf = f1[i];
                        cf[i] = b[0] * (ac - af) + b[1] * (ac * ac - af * af) +
                                b[2] * (bc - bf) + b[3] * (bc * bc - bf * bf) +
                                b[4] * (ac * bc - af * bf) + outc[i];
                    }
                    break;
                case Basis::QuadTreatmentByCovariate:
                    for (Eigen::Index i = 0; i < n; ++i) {
                        const double tc = c0[i], tf = f0[i], xc = c1[i], xf = f1[i];
                        cf[i] = b[0] * (tc - tf) + b[1] * (xc - xf) +
                                b[2] * (xc * xc - xf * xf) + b[3] * (tc * xc - tf * xf) + outc[i];
                    }
                    break;
                case Basis::Identity: {
                    for (Eigen::Index i = 0; i < n; ++i) {
                        double acc = outc[i];
                        for (int p = 0; p < node.np; ++p)
                            acc += b[p] * (node.cfp[static_cast<std::size_t>(p)][i] -
                                           node.fact[static_cast<std::size_t>(p)][i]);
                        cf[i] = acc;
                    }
                    break;
                }
            }
        }
        q_acc += sign * nodes.back().cf.mean();
        if (!want_grad) continue;

        for (auto& node : nodes) node.adj = Eigen::VectorXd::Zero(n);
        nodes.back().adj.setConstant(sign / static_cast<double>(n));
        for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
            Node& node = *it;
            if (!node.beta.size()) continue;
            const double* a = node.adj.data();
            const double* b = node.beta.data();
            const double* f0 = node.fact[0];
            const double* c0 = node.cfp[0];
            const double* f1 = node.np > 1 ? node.fact[1] : nullptr;
            const double* c1 = node.np > 1 ? node.cfp[1] : nullptr;
            SmallVec g_beta = SmallVec::Zero(node.beta.size());
            double* gb = g_beta.data();
            std::array<double*, 2> padj{nullptr, nullptr};
            std::array<double*, 2> gu{nullptr, nullptr};
            for (int p = 0; p < node.np; ++p) {
                const std::size_t sp = static_cast<std::size_t>(p);
                if (node.chain_idx[sp] >= 0)
                    padj[sp] = nodes[static_cast<std::size_t>(node.chain_idx[sp])].adj.data();
                else if (node.is_conf[sp] && want_grad)
                    gu[sp] = out.grad.data() + u_off;
            }
            switch (node.basis) {
                case Basis::Quad1:
                    for (Eigen::Index i = 0; i < n; ++i) {
                        const double ai = a[i];
                        if (ai == 0.0) continue;
                        const double xc = c0[i], xf = f0[i];
                        gb[0] += ai * (xc - xf);
                        gb[1] += ai * (xc * xc - xf * xf);
                        if (padj[0]) padj[0][i] += ai * (b[0] + 2.0 * b[1] * xc);
                        if (gu[0])
                            gu[0][cmap[static_cast<std::size_t>(i)]] +=
                                ai * (2.0 * b[1] * (xc - xf));
                    }
                    break;
                case Basis::Quad2:
                    for (Eigen::Index i = 0; i < n; ++i) {
                        const double ai = a[i];
                        if (ai == 0.0) continue;
                        const double ac = c0[i], af = f0[i], bc = c1[i], bf = f1[i];
                        gb[0] += ai * (ac - af);
                        gb[1] += ai * (ac * ac - af * af);
                        gb[2] += ai * (bc - bf);
                        gb[3] += ai * (bc * bc - bf * bf);
                        gb[4] += ai * (ac * bc - af * bf);
                        if (padj[0]) padj[0][i] += ai * (b[0] + 2.0 * b[1] * ac + b[4] * bc);
                        if (padj[1]) padj[1][i] += ai * (b[2] + 2.0 * b[3] * bc + b[4] * ac);
                        if (gu[0])
                            gu[0][cmap[static_cast<std::size_t>(i)]] +=
                                ai * (2.0 * b[1] * (ac - af) + b[4] * (bc - bf));
                        if (gu[1])
                            gu[1][cmap[static_cast<std::size_t>(i)]] +=
                                ai * (2.0 * b[3] * (bc - bf) + b[4] * (ac - af));
                    }
                    break;
                case Basis::QuadTreatmentByCovariate:
                    for (Eigen::Index i = 0; i < n; ++i) {
                        const double ai = a[i];
                        if (ai == 0.0) continue;
                        const double tc = c0[i], tf = f0[i], xc = c1[i], xf = f1[i];
                        gb[0] += ai * (tc - tf);
                        gb[1] += ai * (xc - xf);
                        gb[2] += ai * (xc * xc - xf * xf);
                        gb[3] += ai * (tc * xc - tf * xf);
                        if (padj[0]) padj[0][i] += ai * (b[0] + b[3] * xc);
                        if (padj[1]) padj[1][i] += ai * (b[1] + 2.0 * b[2] * xc + b[3] * tc);
                        if (gu[0])
                            gu[0][cmap[static_cast<std::size_t>(i)]] += ai * b[3] * (xc - xf);
                        if (gu[1])
                            gu[1][cmap[static_cast<std::size_t>(i)]] +=
                                ai * (2.0 * b[2] * (xc - xf) + b[3] * (tc - tf));
                    }
                    break;
                case Basis::Identity:
                    for (Eigen::Index i = 0; i < n; ++i) {
                        const double ai = a[i];
                        if (ai == 0.0) continue;
                        for (int p = 0; p < node.np; ++p) {
                            const std::size_t sp = static_cast<std::size_t>(p);
                            gb[p] += ai * (node.cfp[sp][i] - node.fact[sp][i]);
                            if (padj[sp]) padj[sp][i] += ai * b[p];
                        }
                    }
                    break;
            }
            if (!node.eq->coeff.empty())
                state.layout->seg(out.grad, node.eq->coeff) += Eigen::VectorXd(g_beta);
        }
    }
    out.q = q_acc;
    return out;
}

// Causal effect of a parametric candidate model on the given data.
inline double parametric_q(const DesignSpec& d, const ModelState& state, const Dataset& data,
                           const EstimandSpec& estimand) {
    return parametric_q_eval(d, state, data, estimand, false).q;
}

// Analytic gradient of parametric_q over the state layout (reverse pass
// through the counterfactual equations; sigma blocks are untouched since
// abduction cancels them).
inline Eigen::VectorXd parametric_q_grad(const DesignSpec& d, const ModelState& state,
                                         const Dataset& data, const EstimandSpec& estimand) {
    return parametric_q_eval(d, state, data, estimand, true).grad;
}

// True effect of a generating sample on a reference dataset it produced.
inline double true_effect_parametric(const DesignSpec& d, const ScmSample& s, const Dataset& data,
                                     const EstimandSpec& estimand) {
    if (estimand.kind == EstimandKind::Cate) {
        const ModelState st = state_from_sample(d, s, data.n, estimand);
        return detail::cate_evaluate(d, st, estimand, false).q;
    }
    auto [y1, y2] = counterfactual_outcomes(d, s, data, estimand);
    return estimand_value(estimand, y1, y2);
}

}  // namespace sbi::scm
