#include "sbi/stats_io.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace sbi;

namespace {

stats_io::ExperimentRow random_row(Rng& rng) {
    stats_io::ExperimentRow r;
    r.design = "confounded";
    r.family = "linear";
    r.n = 1 + static_cast<Eigen::Index>(rng.index(100000));
    r.k = 2 + static_cast<int>(rng.index(50));
    r.lambda = std::abs(rng.normal(1, 2));
    r.seed = rng.index(1000000);
    r.dq_norm = rng.normal(0, 10);
    r.dq_se = std::abs(rng.normal(0, 3));
    r.decision_id = rng.uniform() < 0.5;
    r.ground_truth = rng.uniform() < 0.3   ? GroundTruth::Unknown
                     : rng.uniform() < 0.5 ? GroundTruth::Id
                                           : GroundTruth::NotId;
    r.match = r.ground_truth == GroundTruth::Unknown ? "na"
              : rng.uniform() < 0.5                  ? "yes"
                                                     : "no";
    return r;
}

}  // namespace

TEST_CASE("table csv round trip is exact", "[io]") {
    Rng rng(2024);
    std::vector<stats_io::ExperimentRow> rows;
    for (int i = 0; i < 40; ++i) rows.push_back(random_row(rng));
    const std::string text = stats_io::table_csv(rows);
    auto back = stats_io::parse_table_csv(text);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].design == rows[i].design);
        CHECK(back[i].n == rows[i].n);
        CHECK(back[i].k == rows[i].k);
        CHECK(back[i].lambda == rows[i].lambda);
        CHECK(back[i].seed == rows[i].seed);
        CHECK(back[i].dq_norm == rows[i].dq_norm);
        CHECK(back[i].dq_se == rows[i].dq_se);
        CHECK(back[i].decision_id == rows[i].decision_id);
        CHECK(back[i].ground_truth == rows[i].ground_truth);
        CHECK(back[i].match == rows[i].match);
    }
    CHECK(stats_io::table_csv(back) == text);
}

TEST_CASE("sweep csv round trip is exact", "[io]") {
    Rng rng(2025);
    std::vector<stats_io::SweepPoint> pts;
    for (int i = 0; i < 25; ++i) {
        stats_io::SweepPoint p;
        p.distance = rng.normal(0, 2);
        p.dq_mean = std::abs(rng.normal(0, 1));
        p.dq_se = std::abs(rng.normal(0, 0.3));
        p.n = 1 + static_cast<Eigen::Index>(rng.index(1000));
        p.k = 2 + static_cast<int>(rng.index(20));
        p.seed = rng.index(99999);
        pts.push_back(p);
    }
    const std::string text = stats_io::sweep_csv(pts);
    auto back = stats_io::parse_sweep_csv(text);
    REQUIRE(back.size() == pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(back[i].distance == pts[i].distance);
        CHECK(back[i].dq_mean == pts[i].dq_mean);
        CHECK(back[i].dq_se == pts[i].dq_se);
    }
    CHECK(stats_io::sweep_csv(back) == text);
}

TEST_CASE("dataset text round trip", "[io]") {
    DesignSpec d = get_design("within_subjects", Family::Linear);
    Rng rng(7);
    ScmSample s = scm::sample_prior(d, 60, rng);
    Dataset data = scm::simulate(d, s);
    const std::string text = stats_io::dataset_text(data);
    Dataset back = stats_io::parse_dataset_text(text);
    REQUIRE(back.n == data.n);
    REQUIRE(back.object_of == data.object_of);
    for (const auto& [name, col] : data.columns) {
        REQUIRE(back.columns.count(name) == 1);
        CHECK(back.col(name) == col);
    }
    CHECK(stats_io::dataset_text(back) == text);
}

TEST_CASE("sample text round trip", "[io]") {
    DesignSpec d = get_design("confounded", Family::Gp);
    Rng rng(8);
    ScmSample s = scm::sample_prior(d, 12, rng);
    s.q_star = 1.2345;
    const std::string text = stats_io::sample_text(s);
    ScmSample back = stats_io::parse_sample_text(text);
    REQUIRE(back.params.size() == s.params.size());
    for (const auto& [name, v] : s.params) CHECK(back.params.at(name) == v);
    CHECK(back.confounders == s.confounders);
    for (const auto& [name, v] : s.noise) CHECK(back.noise.at(name) == v);
    REQUIRE(back.q_star.has_value());
    CHECK(*back.q_star == 1.2345);
    CHECK(stats_io::sample_text(back) == text);
}

TEST_CASE("report json carries the summary fields", "[io]") {
    SbiConfig cfg;
    cfg.n = 150;
    cfg.k = 3;
    cfg.opt.epochs = 3;
    cfg.opt.minibatch = 30;
    cfg.seed = 4;
    SbiReport rep = run("unconfounded", "linear", cfg);
    auto j = stats_io::report_json(rep);
    CHECK(j["design"] == "unconfounded");
    CHECK(j["family"] == "linear");
    CHECK(j["k"] == 3);
    CHECK(j["trials"].size() == 3);
    CHECK(j["mu_dq"].get<double>() == rep.mu_dq);
    CHECK(j["q_star"].get<double>() == rep.q_star);
    CHECK((j["decision"] == "ID" || j["decision"] == "NotID"));
    // wall time is a diagnostic, never serialized
    CHECK(j.dump().find("wall") == std::string::npos);
}

TEST_CASE("row normalization avoids dividing by zero", "[io]") {
    SbiReport rep;
    rep.design = "unconfounded";
    rep.family = "linear";
    rep.q_star = 0.0;
    rep.mu_dq = 0.4;
    rep.sigma_dq = 0.1;
    rep.config.k = 4;
    auto row = stats_io::row_from_report(rep, GroundTruth::Id);
    CHECK_FALSE(row.normalized);
    CHECK(row.dq_norm == 0.4);
}

TEST_CASE("spearman rank correlation", "[io]") {
    std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> monotone{2, 4, 9, 16, 30};
    CHECK(spearman(x, monotone) == 1.0);
    std::vector<double> reversed{5, 3, 2, 1, 0};
    CHECK(spearman(x, reversed) == -1.0);
    std::vector<double> tied{1, 1, 1, 1, 1};
    CHECK(spearman(x, tied) == 0.0);
}
