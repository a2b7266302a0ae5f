#pragma once

#include "sbi/gp_kernel.hpp"
#include "sbi/layout.hpp"
#include "sbi/scm.hpp"
#include "sbi/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace sbi::gp {

// Prepared kernel inputs for a GP outcome: factual points (treatment plus an
// optional second dimension) and the inducing counterfactual points. For the
// sample average effect the counterfactual list is [do(t') per instance,
// do(t'') per instance]; a CATE query appends one extra pair at the
// conditioning covariate.
struct GpEnv {
    Eigen::Index n = 0;
    Eigen::Index m = 0;
    Eigen::VectorXd t;
    bool has_second = false;
    bool second_latent = false;  // second dimension reads the confounder block
    Eigen::VectorXd sec;
    std::vector<int> own;     // confounder index per factual point, -1 if none
    Eigen::VectorXd cf_t;
    Eigen::VectorXd cf_sec;
    std::vector<int> cf_own;
    ProductKernelHyper hyper;
    double sigma_y2 = 1.0;
};

inline GpEnv make_env(const DesignSpec& d, const ModelState& state, const Dataset& data,
                      const EstimandSpec& estimand) {
    if (!d.gp_outcome) throw std::invalid_argument("make_env: not a gp design");
    estimand.validate();
    GpEnv env;
    env.n = data.n;
    env.m = scm::ycf_size(data.n, estimand);
    env.t = data.col(d.treatment_var);
    const auto& dims = d.gp_outcome->kernel_dims;
    env.hyper.l_t = std::exp(state.scalar("log_l_" + dims[0]));
    env.hyper.s_t = std::exp(state.scalar("log_s_" + dims[0]));
    env.sigma_y2 = std::exp(state.scalar("log_sigma_Y2"));
    if (dims.size() > 1) {
        env.has_second = true;
        env.hyper.has_second = true;
        env.hyper.l_2 = std::exp(state.scalar("log_l_" + dims[1]));
        env.hyper.s_2 = std::exp(state.scalar("log_s_" + dims[1]));
        env.second_latent = dims[1] == d.confounder_var;
        env.sec.resize(env.n);
        env.own.resize(env.n, -1);
        if (env.second_latent) {
            const auto u = state.seg("U");
            for (Eigen::Index i = 0; i < env.n; ++i) {
                const Eigen::Index k = scm::confounder_index(d, data, i);
                env.sec[i] = u[k];
                env.own[i] = static_cast<int>(k);
            }
        } else {
            env.sec = data.col(dims[1]);
        }
    }
    env.cf_t.resize(env.m);
    env.cf_own.assign(env.m, -1);
    if (env.has_second) env.cf_sec.resize(env.m);
    for (Eigen::Index j = 0; j < 2 * env.n; ++j) {
        const bool first_half = j < env.n;
        env.cf_t[j] = first_half ? estimand.t_prime : estimand.t_double_prime;
        if (env.has_second) {
            const Eigen::Index i = first_half ? j : j - env.n;
            env.cf_sec[j] = env.sec[i];
            env.cf_own[j] = env.own[i];
        }
    }
    if (env.m == 2 * env.n + 2) {
        env.cf_t[2 * env.n] = estimand.t_prime;
        env.cf_t[2 * env.n + 1] = estimand.t_double_prime;
        if (env.has_second) {
            env.cf_sec[2 * env.n] = estimand.conditioning_value;
            env.cf_sec[2 * env.n + 1] = estimand.conditioning_value;
        }
    }
    return env;
}

namespace detail {

inline double kval(const GpEnv& e, double ta, double tb, double sa, double sb) {
    double k = rbf(ta, tb, e.hyper.l_t, e.hyper.s_t);
    if (e.has_second) k *= rbf(sa, sb, e.hyper.l_2, e.hyper.s_2);
    return k;
}

inline double f_t(const GpEnv& e, Eigen::Index i) { return e.t[i]; }
inline double f_s(const GpEnv& e, Eigen::Index i) { return e.has_second ? e.sec[i] : 0.0; }
inline double c_t(const GpEnv& e, Eigen::Index j) { return e.cf_t[j]; }
inline double c_s(const GpEnv& e, Eigen::Index j) { return e.has_second ? e.cf_sec[j] : 0.0; }

}  // namespace detail

// Kernel blocks: ff = cov(outcomes), fc = cov(outcomes, counterfactuals),
// cc = cov(counterfactuals). fc is oriented n x m.
struct KernelBlocks {
    Eigen::MatrixXd ff;
    Eigen::MatrixXd fc;
    Eigen::MatrixXd cc;
};

inline KernelBlocks build_blocks(const GpEnv& e) {
    using namespace detail;
    if (!e.t.allFinite() || (e.has_second && !(e.sec.allFinite() && e.cf_sec.allFinite())))
        throw std::invalid_argument("build_blocks: non-finite inputs");
    KernelBlocks b;
    b.ff.resize(e.n, e.n);
    b.fc.resize(e.n, e.m);
    b.cc.resize(e.m, e.m);
    for (Eigen::Index i = 0; i < e.n; ++i)
        for (Eigen::Index j = 0; j < e.n; ++j)
            b.ff(i, j) = kval(e, f_t(e, i), f_t(e, j), f_s(e, i), f_s(e, j));
    for (Eigen::Index i = 0; i < e.n; ++i)
        for (Eigen::Index j = 0; j < e.m; ++j)
            b.fc(i, j) = kval(e, f_t(e, i), c_t(e, j), f_s(e, i), c_s(e, j));
    for (Eigen::Index i = 0; i < e.m; ++i)
        for (Eigen::Index j = 0; j < e.m; ++j)
            b.cc(i, j) = kval(e, c_t(e, i), c_t(e, j), c_s(e, i), c_s(e, j));
    return b;
}

// Gaussian conditioning of observed outcomes on the inducing counterfactual
// vector: mu = fc cc^-1 ycf, sigma = ff - fc cc^-1 fc^t + sigma_y2 I.
struct GaussianConditional {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
};

inline GaussianConditional conditional(const KernelBlocks& b, const Eigen::VectorXd& ycf,
                                       double sigma_y2) {
    if (ycf.size() != b.cc.rows()) throw std::invalid_argument("conditional: ycf size mismatch");
    CholResult cc = chol_with_jitter(b.cc, 1e-8, "counterfactual covariance");
    GaussianConditional out;
    out.mu = b.fc * cc.llt.solve(ycf);
    out.sigma = b.ff - b.fc * cc.llt.solve(b.fc.transpose());
    out.sigma.diagonal().array() += sigma_y2;
    return out;
}

// Dense kernel partials for one symbol: "log_l_t" / "log_s_t" /
// "log_l_2" / "log_s_2" (derivatives in the stored log parameters) or
// "U:<k>" for the k'th confounder. The jitter added to cc downstream is
// handled by the gradient assembly, not here.
struct KernelPartials {
    Eigen::MatrixXd dff;
    Eigen::MatrixXd dfc;
    Eigen::MatrixXd dcc;
};

inline KernelPartials kernel_partials(const GpEnv& e, const KernelBlocks& b,
                                      const std::string& wrt) {
    using namespace detail;
    KernelPartials p;
    p.dff = Eigen::MatrixXd::Zero(e.n, e.n);
    p.dfc = Eigen::MatrixXd::Zero(e.n, e.m);
    p.dcc = Eigen::MatrixXd::Zero(e.m, e.m);
    auto sq = [](double d) { return d * d; };
    if (wrt == "log_l_t") {
        for (Eigen::Index i = 0; i < e.n; ++i)
            for (Eigen::Index j = 0; j < e.n; ++j)
                p.dff(i, j) = b.ff(i, j) * sq(f_t(e, i) - f_t(e, j)) / e.hyper.l_t;
        for (Eigen::Index i = 0; i < e.n; ++i)
            for (Eigen::Index j = 0; j < e.m; ++j)
                p.dfc(i, j) = b.fc(i, j) * sq(f_t(e, i) - c_t(e, j)) / e.hyper.l_t;
        for (Eigen::Index i = 0; i < e.m; ++i)
            for (Eigen::Index j = 0; j < e.m; ++j)
                p.dcc(i, j) = b.cc(i, j) * sq(c_t(e, i) - c_t(e, j)) / e.hyper.l_t;
    } else if (wrt == "log_s_t" || wrt == "log_s_2") {
        // the kernel is linear in each scale, so d/dlog s = K
        p.dff = b.ff;
        p.dfc = b.fc;
        p.dcc = b.cc;
    } else if (wrt == "log_l_2") {
        for (Eigen::Index i = 0; i < e.n; ++i)
            for (Eigen::Index j = 0; j < e.n; ++j)
                p.dff(i, j) = b.ff(i, j) * sq(f_s(e, i) - f_s(e, j)) / e.hyper.l_2;
        for (Eigen::Index i = 0; i < e.n; ++i)
            for (Eigen::Index j = 0; j < e.m; ++j)
                p.dfc(i, j) = b.fc(i, j) * sq(f_s(e, i) - c_s(e, j)) / e.hyper.l_2;
        for (Eigen::Index i = 0; i < e.m; ++i)
            for (Eigen::Index j = 0; j < e.m; ++j)
                p.dcc(i, j) = b.cc(i, j) * sq(c_s(e, i) - c_s(e, j)) / e.hyper.l_2;
    } else if (wrt.rfind("U:", 0) == 0) {
        const int k = std::stoi(wrt.substr(2));
        // d rbf(a,b)/da = -2 (a-b)/l * rbf(a,b), applied through both the
        // row and the column owner
        auto fac = [&](double sa, double sb, int owna, int ownb) {
            const double base = -2.0 * (sa - sb) / e.hyper.l_2;
            double f = 0.0;
            if (owna == k) f += base;
            if (ownb == k) f -= base;
            return f;
        };
        for (Eigen::Index i = 0; i < e.n; ++i)
            for (Eigen::Index j = 0; j < e.n; ++j)
                p.dff(i, j) = b.ff(i, j) * fac(f_s(e, i), f_s(e, j), e.own[i], e.own[j]);
        for (Eigen::Index i = 0; i < e.n; ++i)
            for (Eigen::Index j = 0; j < e.m; ++j)
                p.dfc(i, j) = b.fc(i, j) * fac(f_s(e, i), c_s(e, j), e.own[i], e.cf_own[j]);
        for (Eigen::Index i = 0; i < e.m; ++i)
            for (Eigen::Index j = 0; j < e.m; ++j)
                p.dcc(i, j) = b.cc(i, j) * fac(c_s(e, i), c_s(e, j), e.cf_own[i], e.cf_own[j]);
    } else {
        throw std::invalid_argument("kernel_partials: unknown symbol " + wrt);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Outcome log-likelihood and its gradient

struct OutcomeEval {
    double ll = 0.0;
    Eigen::VectorXd grad;  // empty unless requested
};

// log N(y_B; mu_B, Sigma_B) for the (optionally minibatched) outcome block,
// with the full analytic gradient over kernel hyperparameters, noise
// variance, confounders and inducing counterfactuals. The chain is
//   dL = alpha . dmu + <G, dSigma>,
//   alpha = Sigma^-1 (y - mu),  G = -1/2 (Sigma^-1 - alpha alpha^t),
//   dmu = dfc w - BB dcc w + BB dycf,     w = cc^-1 ycf, BB = fc cc^-1,
//   dSigma = dff - dfc BB^t - BB dfc^t + BB dcc BB^t + dsigma_y2 I.
inline OutcomeEval outcome_loglik(const DesignSpec& d, const ModelState& state,
                                  const Dataset& data, const EstimandSpec& estimand,
                                  const std::vector<int>* batch = nullptr, double scale = 1.0,
                                  bool want_grad = false) {
    using namespace detail;
    const GpEnv e = make_env(d, state, data, estimand);
    const Eigen::VectorXd ycf = state.seg("Ycf");
    if (ycf.size() != e.m) throw std::invalid_argument("outcome_loglik: Ycf size mismatch");

    std::vector<int> all;
    if (!batch) {
        all.resize(e.n);
        for (Eigen::Index i = 0; i < e.n; ++i) all[static_cast<std::size_t>(i)] = static_cast<int>(i);
        batch = &all;
    }
    const Eigen::Index nb = static_cast<Eigen::Index>(batch->size());

    Eigen::MatrixXd ff(nb, nb), fc(nb, e.m), cc(e.m, e.m);
    for (Eigen::Index a = 0; a < nb; ++a) {
        const Eigen::Index i = (*batch)[a];
        for (Eigen::Index bidx = 0; bidx < nb; ++bidx) {
            const Eigen::Index j = (*batch)[bidx];
            ff(a, bidx) = kval(e, f_t(e, i), f_t(e, j), f_s(e, i), f_s(e, j));
        }
        for (Eigen::Index j = 0; j < e.m; ++j)
            fc(a, j) = kval(e, f_t(e, i), c_t(e, j), f_s(e, i), c_s(e, j));
    }
    for (Eigen::Index i = 0; i < e.m; ++i)
        for (Eigen::Index j = 0; j < e.m; ++j)
            cc(i, j) = kval(e, c_t(e, i), c_t(e, j), c_s(e, i), c_s(e, j));

    const CholResult cc_chol = chol_with_jitter(cc, 1e-8, "counterfactual covariance");
    const Eigen::VectorXd w = cc_chol.llt.solve(ycf);
    const Eigen::MatrixXd bbt = cc_chol.llt.solve(fc.transpose());  // m x nb
    const Eigen::VectorXd mu = fc * w;
    Eigen::MatrixXd sigma = ff - fc * bbt;
    sigma.diagonal().array() += e.sigma_y2;
    const CholResult s_chol = chol_with_jitter(sigma, 0.0, "outcome covariance");

    Eigen::VectorXd y_b(nb);
    const Eigen::VectorXd& y = data.col(d.outcome_var);
    for (Eigen::Index a = 0; a < nb; ++a) y_b[a] = y[(*batch)[a]];

    const Eigen::VectorXd resid = y_b - mu;
    const Eigen::VectorXd alpha = s_chol.llt.solve(resid);
    OutcomeEval out;
    out.ll = scale * (-0.5 * resid.dot(alpha) - 0.5 * logdet_from_llt(s_chol.llt) -
                      0.5 * static_cast<double>(nb) * kLog2Pi);
    if (!want_grad) return out;

    const Eigen::MatrixXd sig_inv =
        s_chol.llt.solve(Eigen::MatrixXd::Identity(nb, nb));
    const Eigen::MatrixXd g_sigma = -0.5 * (sig_inv - alpha * alpha.transpose());
    const Eigen::MatrixXd bb = bbt.transpose();            // nb x m
    const Eigen::VectorXd c1 = bbt * alpha;                // m
    const Eigen::MatrixXd gb = g_sigma * bb;               // nb x m
    const Eigen::MatrixXd h_cc = bb.transpose() * gb;      // m x m
    const Eigen::MatrixXd m_fc = alpha * w.transpose() - 2.0 * gb;  // nb x m
    const Eigen::MatrixXd m_cc = h_cc - c1 * w.transpose();         // m x m

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(state.layout->total());
    state.layout->seg(grad, "Ycf") = scale * c1;

    // gp env restricted to the batch rows, reused by the dense partials
    GpEnv eb = e;
    eb.n = nb;
    eb.t.resize(nb);
    if (e.has_second) {
        eb.sec.resize(nb);
        eb.own.resize(static_cast<std::size_t>(nb));
    }
    for (Eigen::Index a = 0; a < nb; ++a) {
        const Eigen::Index i = (*batch)[a];
        eb.t[a] = e.t[i];
        if (e.has_second) {
            eb.sec[a] = e.sec[i];
            eb.own[static_cast<std::size_t>(a)] = e.own[i];
        }
    }
    KernelBlocks blocks_b{ff, fc, cc};

    const auto& dims = d.gp_outcome->kernel_dims;
    std::vector<std::pair<std::string, std::string>> hyper_syms = {
        {"log_l_t", "log_l_" + dims[0]}, {"log_s_t", "log_s_" + dims[0]}};
    if (e.has_second) {
        hyper_syms.emplace_back("log_l_2", "log_l_" + dims[1]);
        hyper_syms.emplace_back("log_s_2", "log_s_" + dims[1]);
    }
    for (const auto& [sym, block] : hyper_syms) {
        const KernelPartials p = kernel_partials(eb, blocks_b, sym);
        double g = alpha.dot(p.dfc * w) - c1.dot(p.dcc * w);
        g += (g_sigma.array() * p.dff.array()).sum();
        g += -2.0 * (gb.array() * p.dfc.array()).sum() + (h_cc.array() * p.dcc.array()).sum();
        // scale parameters also move the cc jitter (jitter = rel * mean diag,
        // and the diagonal scales with either s): d(cc + jit I) needs + jit I
        if (sym == "log_s_t" || sym == "log_s_2") g += cc_chol.jitter * m_cc.trace();
        grad[state.layout->block(block).offset] += scale * g;
    }
    grad[state.layout->block("log_sigma_Y2").offset] += scale * e.sigma_y2 * g_sigma.trace();

    if (e.second_latent) {
        const Eigen::Index u_off = state.layout->block("U").offset;
        const double inv_l2 = 1.0 / e.hyper.l_2;
        auto add = [&](double weight, double kentry, double sa, double sb, int owna, int ownb) {
            if (owna < 0 && ownb < 0) return;
            const double v = weight * kentry * (-2.0 * (sa - sb) * inv_l2);
            if (v == 0.0) return;
            if (owna >= 0) grad[u_off + owna] += scale * v;
            if (ownb >= 0) grad[u_off + ownb] -= scale * v;
        };
        for (Eigen::Index a = 0; a < nb; ++a)
            for (Eigen::Index bidx = 0; bidx < nb; ++bidx)
                add(g_sigma(a, bidx), ff(a, bidx), eb.sec[a], eb.sec[bidx],
                    eb.own[static_cast<std::size_t>(a)], eb.own[static_cast<std::size_t>(bidx)]);
        for (Eigen::Index a = 0; a < nb; ++a)
            for (Eigen::Index j = 0; j < e.m; ++j)
                add(m_fc(a, j), fc(a, j), eb.sec[a], c_s(e, j),
                    eb.own[static_cast<std::size_t>(a)], e.cf_own[j]);
        for (Eigen::Index i = 0; i < e.m; ++i)
            for (Eigen::Index j = 0; j < e.m; ++j)
                add(m_cc(i, j), cc(i, j), c_s(e, i), c_s(e, j), e.cf_own[i], e.cf_own[j]);
    }
    out.grad = std::move(grad);
    return out;
}

// Candidate-model causal effect for GP designs: mean gap of the inducing
// counterfactual halves (or the conditioning pair for a CATE query).
inline double gp_q(const ModelState& state, Eigen::Index n, const EstimandSpec& estimand) {
    const auto ycf = state.seg("Ycf");
    if (estimand.kind == EstimandKind::Cate) return ycf[2 * n] - ycf[2 * n + 1];
    return ycf.head(n).mean() - ycf.segment(n, n).mean();
}

// True effect of a generating GP sample: one joint draw of (Y, Y', Y'')
// through the full covariance, reusing the sample's standard-normal vectors.
inline double true_effect_gp(const DesignSpec& d, const ScmSample& s, const Dataset& data,
                             const EstimandSpec& estimand) {
    EstimandSpec est = estimand;
    ModelState state = scm::state_from_sample(d, s, data.n, est);
    // hyperparameters come from the sample; Ycf not needed for the env
    const GpEnv e = make_env(d, state, data, est);
    KernelBlocks b = build_blocks(e);
    const Eigen::Index total = e.n + e.m;
    Eigen::MatrixXd joint(total, total);
    joint.topLeftCorner(e.n, e.n) = b.ff;
    joint.topLeftCorner(e.n, e.n).diagonal().array() += e.sigma_y2;
    joint.topRightCorner(e.n, e.m) = b.fc;
    joint.bottomLeftCorner(e.m, e.n) = b.fc.transpose();
    joint.bottomRightCorner(e.m, e.m) = b.cc;
    CholResult c = chol_with_jitter(joint, 1e-8, "joint outcome covariance");
    Eigen::VectorXd z(total);
    z.head(e.n) = s.noise.at("z_Y").head(e.n);
    z.tail(e.m) = s.noise.at("z_cf").head(e.m);
    const Eigen::VectorXd draw = c.llt.matrixL() * z;
    const Eigen::VectorXd ycf = draw.tail(e.m);
    if (est.kind == EstimandKind::Cate) return ycf[2 * e.n] - ycf[2 * e.n + 1];
    return ycf.head(e.n).mean() - ycf.segment(e.n, e.n).mean();
}

}  // namespace sbi::gp
