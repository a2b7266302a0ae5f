#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbi {

enum class Family { Linear, Quadratic, Gp };

inline std::string family_name(Family f) {
    switch (f) {
        case Family::Linear: return "linear";
        case Family::Quadratic: return "quadratic";
        case Family::Gp: return "gp";
    }
    throw std::logic_error("bad family");
}

inline Family family_from_name(const std::string& s) {
    if (s == "linear") return Family::Linear;
    if (s == "quadratic") return Family::Quadratic;
    if (s == "gp") return Family::Gp;
    throw std::invalid_argument("unknown family: " + s);
}

// Mean basis of a structural equation, applied to the parent value vector.
//   Identity 1..k parents -> [p1..pk]          (linear family; empty = mean 0)
//   Quad1    one parent x -> [x, x^2]
//   Quad2    parents (a,b) -> [a, a^2, b, b^2, a*b]
//   QuadTreatmentByCovariate  (T,X) -> [T, X, X^2, T*X]   (binary T: T^2 = T)
enum class Basis { Identity, Quad1, Quad2, QuadTreatmentByCovariate };

struct Equation {
    std::string output;
    std::vector<std::string> parents;     // variable names; may include the confounder
    Basis basis = Basis::Identity;
    std::string coeff;                    // coefficient block name; empty -> mean 0
    std::string noise_log_var;            // name of the log-variance parameter
    bool indicator = false;               // output = 1[first parent > 0]; no noise
};

struct ConfounderSpec {
    enum class Kind { None, Iid, PerObject } kind = Kind::None;
    double var = 0.0;
    int group_size = 25;
};

// Normal prior over a parameter block: entry j ~ N(mean[j], var), iid.
// For log-stored positives (variances, kernel hyperparameters) the prior is
// on the stored log value.
struct PriorNormal {
    Eigen::VectorXd mean;
    double var = 0.3;
};

// GP outcome description: zero-mean GP over the outcome's parents with a
// product RBF kernel, one (lengthscale, scale) pair per parent dimension.
struct GpOutcome {
    std::vector<std::string> kernel_dims;  // parent names, treatment first
    double hyper_prior_mean = 0.0;
    double hyper_prior_var = 0.3;
};

struct DesignSpec {
    std::string name;
    Family family = Family::Linear;
    std::vector<Equation> equations;      // topological order
    std::map<std::string, PriorNormal> param_priors;
    ConfounderSpec confounder;
    std::vector<std::string> observed_vars;
    std::string treatment_var = "T";
    std::string outcome_var = "Y";
    std::string confounder_var = "U";     // name used in parent lists
    std::optional<GpOutcome> gp_outcome;  // set iff family == Gp

    const Equation& equation_for(const std::string& var) const {
        for (const auto& e : equations)
            if (e.output == var) return e;
        throw std::invalid_argument("no equation for variable " + var);
    }

    bool is_observed(const std::string& var) const {
        for (const auto& v : observed_vars)
            if (v == var) return true;
        return false;
    }
};

// One realization from the prior: parameters, confounders and exogenous
// noise. GP designs keep the outcome draw in noise as standard-normal
// vectors ("z_Y", "z_cf"), mapped through the kernel Cholesky at simulation
// time. q_star is the effect of the generating model, recorded when known.
struct ScmSample {
    std::map<std::string, Eigen::VectorXd> params;
    Eigen::VectorXd confounders;          // empty when the design has none
    std::map<std::string, Eigen::VectorXd> noise;
    std::optional<double> q_star;
};

struct Dataset {
    Eigen::Index n = 0;
    std::map<std::string, Eigen::VectorXd> columns;
    std::vector<int> object_of;           // non-empty iff hierarchical design

    const Eigen::VectorXd& col(const std::string& name) const {
        auto it = columns.find(name);
        if (it == columns.end()) throw std::invalid_argument("missing column " + name);
        return it->second;
    }
};

enum class EstimandKind { Sate, Cate };

struct EstimandSpec {
    EstimandKind kind = EstimandKind::Sate;
    std::string treatment_var = "T";
    double t_prime = 1.0;
    double t_double_prime = 0.0;
    std::string conditioning_var;         // CATE only
    double conditioning_value = 0.0;

    void validate() const {
        if (t_prime == t_double_prime)
            throw std::invalid_argument("estimand requires t' != t''");
        if (kind == EstimandKind::Cate && conditioning_var.empty())
            throw std::invalid_argument("CATE estimand needs a conditioning covariate");
    }
};

enum class GroundTruth { Id, NotId, Unknown };

inline std::string ground_truth_name(GroundTruth g) {
    switch (g) {
        case GroundTruth::Id: return "ID";
        case GroundTruth::NotId: return "NotID";
        case GroundTruth::Unknown: return "Unknown";
    }
    throw std::logic_error("bad ground truth");
}

// Trial failed inside the optimizer (non-finite gradient or objective).
struct TrialAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularMatrixError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sbi
