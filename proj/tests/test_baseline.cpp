#include "sbi/baseline.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace sbi;

namespace {

Dataset make_data(const std::string& name, Eigen::Index n, std::uint64_t seed, ScmSample* out = nullptr) {
    DesignSpec d = get_design(name, Family::Linear);
    Rng rng(seed);
    ScmSample s = scm::sample_prior(d, n, rng);
    if (out) *out = s;
    return scm::simulate(d, s);
}

}  // namespace

TEST_CASE("profile range contains the warmup solution", "[baseline]") {
    DesignSpec d = get_design("unconfounded", Family::Linear);
    Dataset data = make_data("unconfounded", 300, 11);
    baseline::BaselineConfig cfg;
    cfg.warmup_steps = 120;
    cfg.perturb_steps = 15;
    cfg.repetitions = 4;
    cfg.seed = 3;
    EstimandSpec est;
    auto out = baseline::profile_range(d, data, est, cfg);
    CHECK(out.q_min <= out.q_warmup);
    CHECK(out.q_max >= out.q_warmup);
    CHECK(out.range == out.q_max - out.q_min);
    CHECK(out.aborted_perturbations == 0);
}

TEST_CASE("zero perturbation collapses the range", "[baseline]") {
    DesignSpec d = get_design("unconfounded", Family::Linear);
    Dataset data = make_data("unconfounded", 400, 13);
    baseline::BaselineConfig cfg;
    cfg.warmup_steps = 300;
    cfg.perturb_steps = 15;
    cfg.repetitions = 5;
    cfg.seed = 5;
    EstimandSpec est;
    cfg.delta_s = 0.0;
    auto none = baseline::profile_range(d, data, est, cfg);
    cfg.delta_s = 0.05;
    auto some = baseline::profile_range(d, data, est, cfg);
    INFO("range with no perturbation " << none.range << ", with perturbation " << some.range);
    CHECK(none.range < 0.05);
    CHECK(none.range <= some.range + 1e-12);
}

TEST_CASE("confounded range exceeds unconfounded on matched seeds", "[baseline]") {
    EstimandSpec est;
    baseline::BaselineConfig cfg;
    cfg.warmup_steps = 250;
    cfg.perturb_steps = 25;
    cfg.repetitions = 25;
    cfg.seed = 7;
    Dataset d_conf = make_data("confounded", 600, 21);
    Dataset d_unc = make_data("unconfounded", 600, 21);
    auto conf = baseline::profile_range(get_design("confounded", Family::Linear), d_conf, est, cfg);
    auto unc = baseline::profile_range(get_design("unconfounded", Family::Linear), d_unc, est, cfg);
    INFO("confounded " << conf.range << " unconfounded " << unc.range);
    CHECK(conf.range > unc.range);
}
