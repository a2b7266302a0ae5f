#include "sbi/designs.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdint>

using namespace sbi;

// frozen over the catalog text dump; guards against accidental prior drift
#define SBI_CATALOG_CHECKSUM 961640325224022399ULL

namespace {
std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}
}  // namespace

TEST_CASE("catalog has 19 entries and the expected keys", "[designs]") {
    auto entries = catalog();
    REQUIRE(entries.size() == 19);
    int linear = 0, quad = 0, gp = 0;
    for (const auto& e : entries) {
        if (e.spec.family == Family::Linear) ++linear;
        if (e.spec.family == Family::Quadratic) ++quad;
        if (e.spec.family == Family::Gp) ++gp;
    }
    CHECK(linear == 7);
    CHECK(quad == 7);
    CHECK(gp == 5);

    CHECK_THROWS_AS(get_design("backdoor", Family::Gp), std::invalid_argument);
    CHECK_THROWS_AS(get_design("frontdoor", Family::Gp), std::invalid_argument);
    CHECK_THROWS_AS(get_design("nonsense", Family::Linear), std::invalid_argument);
}

TEST_CASE("confounded linear priors", "[designs]") {
    DesignSpec d = get_design("confounded", Family::Linear);
    CHECK(d.param_priors.at("beta_T").mean[0] == 0.5);
    REQUIRE(d.param_priors.at("beta_Y").mean.size() == 2);
    CHECK(d.param_priors.at("beta_Y").mean[0] == 1.0);
    CHECK(d.param_priors.at("beta_Y").mean[1] == 0.5);
    CHECK(d.param_priors.at("log_sigma_T2").mean[0] == -1.0);
    CHECK(d.param_priors.at("log_sigma_Y2").mean[0] == -3.0);
    for (const auto& [name, prior] : d.param_priors) CHECK(prior.var == 0.3);
    CHECK(d.confounder.kind == ConfounderSpec::Kind::Iid);
    CHECK(d.confounder.var == 0.3);
}

TEST_CASE("frontdoor quadratic outcome prior mean", "[designs]") {
    DesignSpec d = get_design("frontdoor", Family::Quadratic);
    const auto& m = d.param_priors.at("beta_Y").mean;
    REQUIRE(m.size() == 5);
    CHECK(m[0] == 1.0);
    CHECK(m[1] == 0.0);
    CHECK(m[2] == 0.5);
    CHECK(m[3] == 0.0);
    CHECK(m[4] == 0.0);
    // mediator, not treatment, parents the outcome
    CHECK(d.equation_for("Y").parents == std::vector<std::string>{"X", "U"});
}

TEST_CASE("remaining supplement priors spot checks", "[designs]") {
    DesignSpec iv = get_design("iv", Family::Linear);
    CHECK(iv.param_priors.at("beta_T").mean[0] == 2.0);
    CHECK(iv.param_priors.at("beta_T").mean[1] == 0.5);
    CHECK(iv.param_priors.at("log_sigma_I2").mean[0] == 0.0);

    DesignSpec fd = get_design("frontdoor", Family::Linear);
    CHECK(fd.param_priors.at("log_sigma_T2").mean[0] == -2.0);
    CHECK(fd.param_priors.at("log_sigma_X2").mean[0] == 0.0);

    DesignSpec rd = get_design("rdd", Family::Linear);
    CHECK(rd.param_priors.at("log_sigma_X2").mean[0] == -1.0);
    CHECK(rd.param_priors.count("log_sigma_T2") == 0);
    CHECK(rd.equation_for("T").indicator);

    DesignSpec rdq = get_design("rdd", Family::Quadratic);
    const auto& m = rdq.param_priors.at("beta_Y").mean;
    REQUIRE(m.size() == 4);
    CHECK(m[0] == 1.0);
    CHECK(m[1] == 0.5);
    CHECK(m[2] == 0.0);
    CHECK(m[3] == 0.0);

    DesignSpec ws = get_design("within_subjects", Family::Linear);
    CHECK(ws.confounder.kind == ConfounderSpec::Kind::PerObject);
    CHECK(ws.confounder.group_size == 25);
}

TEST_CASE("quadratic basis", "[designs]") {
    Eigen::VectorXd one(1);
    one << 2.0;
    auto b1 = quadratic_basis(one);
    REQUIRE(b1.size() == 2);
    CHECK(b1[0] == 2.0);
    CHECK(b1[1] == 4.0);

    Eigen::VectorXd two(2);
    two << 1.0, 3.0;
    auto b2 = quadratic_basis(two);
    REQUIRE(b2.size() == 5);
    CHECK(b2[0] == 1.0);
    CHECK(b2[1] == 1.0);
    CHECK(b2[2] == 3.0);
    CHECK(b2[3] == 9.0);
    CHECK(b2[4] == 3.0);

    Eigen::VectorXd tx(2);
    tx << 1.0, -1.0;
    auto b3 = quadratic_basis(tx, true);
    REQUIRE(b3.size() == 4);
    CHECK(b3[0] == 1.0);
    CHECK(b3[1] == -1.0);
    CHECK(b3[2] == 1.0);
    CHECK(b3[3] == -1.0);

    Eigen::VectorXd three(3);
    three << 1.0, 2.0, 3.0;
    CHECK_THROWS_AS(quadratic_basis(three), std::invalid_argument);
}

TEST_CASE("gp design structure", "[designs]") {
    DesignSpec conf = gp_design_structure("confounded");
    REQUIRE(conf.gp_outcome.has_value());
    CHECK(conf.gp_outcome->kernel_dims == std::vector<std::string>{"T", "U"});
    CHECK(conf.param_priors.count("log_l_T") == 1);
    CHECK(conf.param_priors.count("log_s_U") == 1);
    CHECK(conf.param_priors.at("log_l_T").mean[0] == 0.0);
    CHECK(conf.param_priors.at("log_l_T").var == 0.3);
    // non-outcome equation keeps the linear prior
    CHECK(conf.param_priors.at("beta_T").mean[0] == 0.5);
    CHECK(conf.param_priors.count("beta_Y") == 0);

    DesignSpec rd = gp_design_structure("rdd");
    CHECK(rd.gp_outcome->kernel_dims == std::vector<std::string>{"T", "X"});
    CHECK(rd.param_priors.count("log_l_X") == 1);

    DesignSpec ur = gp_design_structure("unconfounded");
    CHECK(ur.gp_outcome->kernel_dims == std::vector<std::string>{"T"});
}

TEST_CASE("ground truth labels", "[designs]") {
    CHECK(ground_truth_label("unconfounded", Family::Linear) == GroundTruth::Id);
    CHECK(ground_truth_label("confounded", Family::Linear) == GroundTruth::NotId);
    CHECK(ground_truth_label("backdoor", Family::Linear) == GroundTruth::Id);
    CHECK(ground_truth_label("frontdoor", Family::Linear) == GroundTruth::Id);
    CHECK(ground_truth_label("iv", Family::Linear) == GroundTruth::Id);
    CHECK(ground_truth_label("within_subjects", Family::Linear) == GroundTruth::Id);
    CHECK(ground_truth_label("rdd", Family::Linear) == GroundTruth::Id);

    CHECK(ground_truth_label("confounded", Family::Quadratic) == GroundTruth::NotId);
    CHECK(ground_truth_label("iv", Family::Quadratic) == GroundTruth::NotId);
    CHECK(ground_truth_label("frontdoor", Family::Quadratic) == GroundTruth::Id);

    CHECK(ground_truth_label("unconfounded", Family::Gp) == GroundTruth::Id);
    CHECK(ground_truth_label("confounded", Family::Gp) == GroundTruth::NotId);
    CHECK(ground_truth_label("iv", Family::Gp) == GroundTruth::Unknown);
    CHECK(ground_truth_label("within_subjects", Family::Gp) == GroundTruth::Unknown);
    CHECK(ground_truth_label("rdd", Family::Gp) == GroundTruth::Unknown);
}

TEST_CASE("catalog serialization is frozen", "[designs]") {
    const std::string text = catalog_serialize();
    // every prior constant from the experiment description appears
    CHECK(text.find("mean=[1,0.5]") != std::string::npos);
    CHECK(text.find("mean=[2,0.5]") != std::string::npos);
    CHECK(text.find("mean=[1,0,0.5,0,0]") != std::string::npos);
    CHECK(text.find("mean=[1,0.5,0,0]") != std::string::npos);
    CHECK(text.find("var=0.3") != std::string::npos);
    CHECK(text.find("mean=[-3]") != std::string::npos);
    CHECK(text.find("mean=[-2]") != std::string::npos);
    CHECK(text.find("mean=[-1]") != std::string::npos);

    const std::uint64_t sum = fnv1a(text);
    INFO("catalog checksum: " << sum);
    CHECK(sum == SBI_CATALOG_CHECKSUM);
}

TEST_CASE("catalog list text", "[designs]") {
    const std::string text = catalog_list_text();
    int lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    CHECK(lines == 19);
    CHECK(text.find("confounded,linear,NotID") != std::string::npos);
    CHECK(text.find("unconfounded,gp,ID") != std::string::npos);
    CHECK(text.find("iv,quadratic,NotID") != std::string::npos);
    CHECK(text.find("rdd,gp,Unknown") != std::string::npos);
}
