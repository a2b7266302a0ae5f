#pragma once

#include "sbi/basis.hpp"
#include "sbi/text_format.hpp"
#include "sbi/types.hpp"

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sbi {

struct CatalogEntry {
    DesignSpec spec;
    GroundTruth ground_truth = GroundTruth::Unknown;
};

namespace detail {

inline PriorNormal prior1(double mean, double var = 0.3) {
    PriorNormal p;
    p.mean = Eigen::VectorXd::Constant(1, mean);
    p.var = var;
    return p;
}

inline PriorNormal prior_vec(std::initializer_list<double> means, double var = 0.3) {
    PriorNormal p;
    p.mean = Eigen::VectorXd(static_cast<Eigen::Index>(means.size()));
    Eigen::Index i = 0;
    for (double m : means) p.mean[i++] = m;
    p.var = var;
    return p;
}

inline Equation eq(std::string out, std::vector<std::string> parents, Basis basis,
                   std::string coeff, std::string noise) {
    Equation e;
    e.output = std::move(out);
    e.parents = std::move(parents);
    e.basis = basis;
    e.coeff = std::move(coeff);
    e.noise_log_var = std::move(noise);
    return e;
}

inline Equation indicator_eq(std::string out, std::string parent) {
    Equation e;
    e.output = std::move(out);
    e.parents = {std::move(parent)};
    e.indicator = true;
    return e;
}

inline DesignSpec linear_design(const std::string& name) {
    DesignSpec d;
    d.name = name;
    d.family = Family::Linear;
    if (name == "unconfounded") {
        d.equations = {eq("T", {}, Basis::Identity, "", "log_sigma_T2"),
                       eq("Y", {"T"}, Basis::Identity, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_Y", prior1(1.0)},
                          {"log_sigma_T2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.observed_vars = {"T", "Y"};
    } else if (name == "confounded") {
        d.equations = {eq("T", {"U"}, Basis::Identity, "beta_T", "log_sigma_T2"),
                       eq("Y", {"T", "U"}, Basis::Identity, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_T", prior1(0.5)},
                          {"beta_Y", prior_vec({1.0, 0.5})},
                          {"log_sigma_T2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.confounder = {ConfounderSpec::Kind::Iid, 0.3, 25};
        d.observed_vars = {"T", "Y"};
    } else if (name == "backdoor") {
        d.equations = {eq("X", {}, Basis::Identity, "", "log_sigma_X2"),
                       eq("T", {"X"}, Basis::Identity, "beta_T", "log_sigma_T2"),
                       eq("Y", {"T", "X"}, Basis::Identity, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_T", prior1(0.5)},
                          {"beta_Y", prior_vec({1.0, 0.5})},
                          {"log_sigma_X2", prior1(-3.0)},
                          {"log_sigma_T2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.observed_vars = {"X", "T", "Y"};
    } else if (name == "frontdoor") {
        d.equations = {eq("T", {"U"}, Basis::Identity, "beta_T", "log_sigma_T2"),
                       eq("X", {"T"}, Basis::Identity, "beta_X", "log_sigma_X2"),
                       eq("Y", {"X", "U"}, Basis::Identity, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_T", prior1(0.5)},
                          {"beta_X", prior1(1.0)},
                          {"beta_Y", prior_vec({1.0, 0.5})},
                          {"log_sigma_T2", prior1(-2.0)},
                          {"log_sigma_X2", prior1(-0.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.confounder = {ConfounderSpec::Kind::Iid, 0.3, 25};
        d.observed_vars = {"T", "X", "Y"};
    } else if (name == "iv") {
        d.equations = {eq("I", {}, Basis::Identity, "", "log_sigma_I2"),
                       eq("T", {"I", "U"}, Basis::Identity, "beta_T", "log_sigma_T2"),
                       eq("Y", {"T", "U"}, Basis::Identity, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_T", prior_vec({2.0, 0.5})},
                          {"beta_Y", prior_vec({1.0, 0.5})},
                          {"log_sigma_I2", prior1(0.0)},
                          {"log_sigma_T2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.confounder = {ConfounderSpec::Kind::Iid, 0.3, 25};
        d.observed_vars = {"I", "T", "Y"};
    } else if (name == "within_subjects") {
        d.equations = {eq("T", {"U"}, Basis::Identity, "beta_T", "log_sigma_T2"),
                       eq("Y", {"T", "U"}, Basis::Identity, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_T", prior1(0.5)},
                          {"beta_Y", prior_vec({1.0, 0.5})},
                          {"log_sigma_T2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.confounder = {ConfounderSpec::Kind::PerObject, 0.3, 25};
        d.observed_vars = {"T", "Y"};
    } else if (name == "rdd") {
        d.equations = {eq("X", {}, Basis::Identity, "", "log_sigma_X2"),
                       indicator_eq("T", "X"),
                       eq("Y", {"T", "X"}, Basis::Identity, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_Y", prior_vec({1.0, 0.5})},
                          {"log_sigma_X2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.observed_vars = {"X", "T", "Y"};
    } else {
        throw std::invalid_argument("unknown design: " + name);
    }
    return d;
}

inline DesignSpec quadratic_design(const std::string& name) {
    DesignSpec d;
    d.name = name;
    d.family = Family::Quadratic;
    if (name == "unconfounded") {
        d.equations = {eq("T", {}, Basis::Identity, "", "log_sigma_T2"),
                       eq("Y", {"T"}, Basis::Quad1, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_Y", prior_vec({1.0, 0.0})},
                          {"log_sigma_T2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.observed_vars = {"T", "Y"};
    } else if (name == "confounded") {
        d.equations = {eq("T", {"U"}, Basis::Quad1, "beta_T", "log_sigma_T2"),
                       eq("Y", {"T", "U"}, Basis::Quad2, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_T", prior_vec({1.0, 0.0})},
                          {"beta_Y", prior_vec({1.0, 0.0, 0.5, 0.0, 0.0})},
                          {"log_sigma_T2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.confounder = {ConfounderSpec::Kind::Iid, 0.3, 25};
        d.observed_vars = {"T", "Y"};
    } else if (name == "backdoor") {
        d.equations = {eq("X", {}, Basis::Identity, "", "log_sigma_X2"),
                       eq("T", {"X"}, Basis::Quad1, "beta_T", "log_sigma_T2"),
                       eq("Y", {"T", "X"}, Basis::Quad2, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_T", prior_vec({1.0, 0.0})},
                          {"beta_Y", prior_vec({1.0, 0.0, 0.5, 0.0, 0.0})},
                          {"log_sigma_X2", prior1(-3.0)},
                          {"log_sigma_T2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.observed_vars = {"X", "T", "Y"};
    } else if (name == "frontdoor") {
        d.equations = {eq("T", {"U"}, Basis::Quad1, "beta_T", "log_sigma_T2"),
                       eq("X", {"T"}, Basis::Quad1, "beta_X", "log_sigma_X2"),
                       eq("Y", {"X", "U"}, Basis::Quad2, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_T", prior_vec({1.0, 0.0})},
                          {"beta_X", prior_vec({1.0, 0.0})},
                          {"beta_Y", prior_vec({1.0, 0.0, 0.5, 0.0, 0.0})},
                          {"log_sigma_T2", prior1(-2.0)},
                          {"log_sigma_X2", prior1(-0.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.confounder = {ConfounderSpec::Kind::Iid, 0.3, 25};
        d.observed_vars = {"T", "X", "Y"};
    } else if (name == "iv") {
        d.equations = {eq("I", {}, Basis::Identity, "", "log_sigma_I2"),
                       eq("T", {"I", "U"}, Basis::Quad2, "beta_T", "log_sigma_T2"),
                       eq("Y", {"T", "U"}, Basis::Quad2, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_T", prior_vec({1.0, 0.0, 0.5, 0.0, 0.0})},
                          {"beta_Y", prior_vec({1.0, 0.0, 0.5, 0.0, 0.0})},
                          {"log_sigma_I2", prior1(0.0)},
                          {"log_sigma_T2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.confounder = {ConfounderSpec::Kind::Iid, 0.3, 25};
        d.observed_vars = {"I", "T", "Y"};
    } else if (name == "within_subjects") {
        d.equations = {eq("T", {"U"}, Basis::Quad1, "beta_T", "log_sigma_T2"),
                       eq("Y", {"T", "U"}, Basis::Quad2, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_T", prior_vec({1.0, 0.0})},
                          {"beta_Y", prior_vec({1.0, 0.0, 0.5, 0.0, 0.0})},
                          {"log_sigma_T2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.confounder = {ConfounderSpec::Kind::PerObject, 0.3, 25};
        d.observed_vars = {"T", "Y"};
    } else if (name == "rdd") {
        d.equations = {eq("X", {}, Basis::Identity, "", "log_sigma_X2"),
                       indicator_eq("T", "X"),
                       eq("Y", {"T", "X"}, Basis::QuadTreatmentByCovariate, "beta_Y", "log_sigma_Y2")};
        d.param_priors = {{"beta_Y", prior_vec({1.0, 0.5, 0.0, 0.0})},
                          {"log_sigma_X2", prior1(-1.0)},
                          {"log_sigma_Y2", prior1(-3.0)}};
        d.observed_vars = {"X", "T", "Y"};
    } else {
        throw std::invalid_argument("unknown design: " + name);
    }
    return d;
}

// GP designs reuse the linear priors for every non-outcome equation; the
// outcome is a zero-mean GP with a product RBF kernel over its parents.
inline DesignSpec gp_design(const std::string& name) {
    if (name == "backdoor" || name == "frontdoor")
        throw std::invalid_argument("no gp entry for design: " + name);
    DesignSpec d = linear_design(name);
    d.family = Family::Gp;
    // drop the outcome equation and its coefficient prior
    std::vector<Equation> keep;
    for (const auto& e : d.equations)
        if (e.output != d.outcome_var) keep.push_back(e);
    d.equations = std::move(keep);
    d.param_priors.erase("beta_Y");

    GpOutcome gp;
    if (name == "unconfounded") gp.kernel_dims = {"T"};
    else if (name == "confounded" || name == "iv" || name == "within_subjects") gp.kernel_dims = {"T", "U"};
    else if (name == "rdd") gp.kernel_dims = {"T", "X"};
    for (const auto& dim : gp.kernel_dims) {
        d.param_priors["log_l_" + dim] = prior1(gp.hyper_prior_mean, gp.hyper_prior_var);
        d.param_priors["log_s_" + dim] = prior1(gp.hyper_prior_mean, gp.hyper_prior_var);
    }
    d.gp_outcome = gp;
    return d;
}

}  // namespace detail

inline const std::vector<std::string>& design_names() {
    static const std::vector<std::string> names = {
        "unconfounded", "confounded", "backdoor", "frontdoor",
        "iv", "within_subjects", "rdd"};
    return names;
}

inline GroundTruth ground_truth_label(const std::string& name, Family family) {
    if (name == "confounded") return GroundTruth::NotId;
    if (family == Family::Quadratic && name == "iv") return GroundTruth::NotId;
    if (family == Family::Gp && name != "unconfounded") return GroundTruth::Unknown;
    return GroundTruth::Id;
}

inline DesignSpec get_design(const std::string& name, Family family) {
    bool known = false;
    for (const auto& n : design_names())
        if (n == name) known = true;
    if (!known) throw std::invalid_argument("unknown design: " + name);
    switch (family) {
        case Family::Linear: return detail::linear_design(name);
        case Family::Quadratic: return detail::quadratic_design(name);
        case Family::Gp: return detail::gp_design(name);
    }
    throw std::logic_error("bad family");
}

inline DesignSpec get_design(const std::string& name, const std::string& family) {
    return get_design(name, family_from_name(family));
}

// Structure descriptor for a GP design: the non-outcome sub-model plus the
// kernel dimensions. Identical to get_design(name, gp); kept as a named
// accessor because callers often only need the kernel layout.
inline DesignSpec gp_design_structure(const std::string& name) {
    return get_design(name, Family::Gp);
}

inline std::vector<CatalogEntry> catalog() {
    std::vector<CatalogEntry> entries;
    for (Family f : {Family::Linear, Family::Quadratic, Family::Gp}) {
        for (const auto& name : design_names()) {
            if (f == Family::Gp && (name == "backdoor" || name == "frontdoor")) continue;
            entries.push_back({get_design(name, f), ground_truth_label(name, f)});
        }
    }
    return entries;
}

// Deterministic text dump of every prior constant in the catalog; the audit
// test checksums this.
inline std::string catalog_serialize() {
    std::ostringstream os;
    for (const auto& entry : catalog()) {
        const DesignSpec& d = entry.spec;
        os << d.name << "," << family_name(d.family) << ","
           << ground_truth_name(entry.ground_truth) << "\n";
        for (const auto& e : d.equations) {
            os << "  eq " << e.output << " <-";
            for (const auto& p : e.parents) os << " " << p;
            os << " basis=" << static_cast<int>(e.basis)
               << " coeff=" << e.coeff << " noise=" << e.noise_log_var
               << " indicator=" << e.indicator << "\n";
        }
        for (const auto& [pname, prior] : d.param_priors) {
            os << "  prior " << pname << " mean=[";
            for (Eigen::Index i = 0; i < prior.mean.size(); ++i) {
                if (i) os << ",";
                os << format_double(prior.mean[i]);
            }
            os << "] var=" << format_double(prior.var) << "\n";
        }
        os << "  confounder kind=" << static_cast<int>(d.confounder.kind)
           << " var=" << format_double(d.confounder.var)
           << " group=" << d.confounder.group_size << "\n";
        if (d.gp_outcome) {
            os << "  gp dims=";
            for (const auto& k : d.gp_outcome->kernel_dims) os << k << " ";
            os << "hyper_prior=N(" << format_double(d.gp_outcome->hyper_prior_mean) << ","
               << format_double(d.gp_outcome->hyper_prior_var) << ")\n";
        }
    }
    return os.str();
}

inline std::string catalog_list_text() {
    std::ostringstream os;
    for (const auto& entry : catalog())
        os << entry.spec.name << "," << family_name(entry.spec.family) << ","
           << ground_truth_name(entry.ground_truth) << "\n";
    return os.str();
}

}  // namespace sbi
