#pragma once

#include "sbi/sbi.hpp"
#include "sbi/stats_util.hpp"
#include "sbi/text_format.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace sbi::stats_io {

struct ExperimentRow {
    std::string design;
    std::string family;
    Eigen::Index n = 0;
    int k = 0;
    double lambda = 1.0;
    std::uint64_t seed = 0;
    double dq_norm = 0.0;  // mu / |Q*|, or raw mu when normalized == false
    double dq_se = 0.0;
    bool decision_id = false;
    GroundTruth ground_truth = GroundTruth::Unknown;
    std::string match;  // yes | no | na
    bool normalized = true;
};

inline ExperimentRow row_from_report(const SbiReport& rep, GroundTruth gt) {
    ExperimentRow row;
    row.design = rep.design;
    row.family = rep.family;
    row.n = rep.config.n;
    row.k = rep.config.k;
    row.lambda = rep.config.lambda;
    row.seed = rep.config.seed;
    const double scale = std::abs(rep.q_star);
    row.normalized = scale > 1e-12;
    const double div = row.normalized ? scale : 1.0;
    row.dq_norm = rep.mu_dq / div;
    row.dq_se = rep.sigma_dq / std::sqrt(static_cast<double>(rep.config.k)) / div;
    row.decision_id = rep.identifiable;
    row.ground_truth = gt;
    if (gt == GroundTruth::Unknown)
        row.match = "na";
    else
        row.match = (rep.identifiable == (gt == GroundTruth::Id)) ? "yes" : "no";
    return row;
}

inline const char* kTableCsvHeader = "design,family,n,k,lambda,seed,dq_norm,dq_se,decision,ground_truth,match";

inline std::string table_csv(const std::vector<ExperimentRow>& rows) {
    std::ostringstream os;
    os << kTableCsvHeader << "\n";
    for (const auto& r : rows) {
        os << r.design << "," << r.family << "," << r.n << "," << r.k << ","
           << format_double(r.lambda) << "," << r.seed << "," << format_double(r.dq_norm) << ","
           << format_double(r.dq_se) << "," << (r.decision_id ? "ID" : "NotID") << ","
           << ground_truth_name(r.ground_truth) << "," << r.match << "\n";
    }
    return os.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline GroundTruth ground_truth_from_name(const std::string& s) {
    if (s == "ID") return GroundTruth::Id;
    if (s == "NotID") return GroundTruth::NotId;
    if (s == "Unknown") return GroundTruth::Unknown;
    throw std::invalid_argument("bad ground truth label: " + s);
}

}  // namespace detail

inline std::vector<ExperimentRow> parse_table_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kTableCsvHeader)
        throw std::invalid_argument("bad table csv header");
    std::vector<ExperimentRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 11) throw std::invalid_argument("bad table csv row: " + line);
        ExperimentRow r;
        r.design = f[0];
        r.family = f[1];
        r.n = parse_int(f[2]);
        r.k = static_cast<int>(parse_int(f[3]));
        r.lambda = parse_double(f[4]);
        r.seed = parse_uint(f[5]);
        r.dq_norm = parse_double(f[6]);
        r.dq_se = parse_double(f[7]);
        r.decision_id = f[8] == "ID";
        r.ground_truth = detail::ground_truth_from_name(f[9]);
        r.match = f[10];
        rows.push_back(r);
    }
    return rows;
}

// Scaled-down reproduction of the experiment tables. A zero n or k in the
// base config picks the family default: the published settings divided by
// 6 (sample size) and 3 (trial count); GP designs already run at n = 50.
inline std::vector<ExperimentRow> table_reproduce(const std::vector<Family>& families,
                                                  SbiConfig base, std::uint64_t seed) {
    std::vector<ExperimentRow> rows;
    std::uint64_t row_index = 0;
    for (Family fam : families) {
        SbiConfig cfg = base;
        if (base.n == 0) cfg.n = fam == Family::Gp ? 50 : 5000;
        if (base.k == 0) cfg.k = 10;
        if (fam == Family::Gp && base.opt.minibatch == 30) cfg.opt.minibatch = 10;
        for (const auto& name : design_names()) {
            if (fam == Family::Gp && (name == "backdoor" || name == "frontdoor")) continue;
            cfg.seed = derive_seed(seed, row_index++);
            SbiReport rep = run(get_design(name, fam), cfg);
            rows.push_back(row_from_report(rep, ground_truth_label(name, fam)));
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Conditional-effect sweep for the regression discontinuity design

struct SweepPoint {
    double distance = 0.0;
    double dq_mean = 0.0;  // raw trial-mean effect gap
    double dq_se = 0.0;
    Eigen::Index n = 0;
    int k = 0;
    std::uint64_t seed = 0;
    double q_star = 0.0;
    bool decision_id = false;
};

inline const char* kSweepCsvHeader = "distance,dq_mean,dq_se,n,k,seed";

// Conditional effects at covariate values marching away from the threshold.
inline std::vector<SweepPoint> rdd_cate_sweep(Family family, const std::vector<double>& distances,
                                              SbiConfig base, std::uint64_t seed) {
    std::vector<SweepPoint> out;
    std::uint64_t idx = 0;
    for (double dist : distances) {
        SbiConfig cfg = base;
        cfg.estimand.kind = EstimandKind::Cate;
        cfg.estimand.conditioning_var = "X";
        cfg.estimand.conditioning_value = dist;
        cfg.seed = derive_seed(seed, idx++);
        SbiReport rep = run(get_design("rdd", family), cfg);
        SweepPoint pt;
        pt.distance = dist;
        pt.dq_mean = rep.mu_dq;
        pt.dq_se = rep.sigma_dq / std::sqrt(static_cast<double>(cfg.k));
        pt.n = cfg.n;
        pt.k = cfg.k;
        pt.seed = cfg.seed;
        pt.q_star = rep.q_star;
        pt.decision_id = rep.identifiable;
        out.push_back(pt);
    }
    return out;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& points) {
    std::ostringstream os;
    os << kSweepCsvHeader << "\n";
    for (const auto& p : points)
        os << format_double(p.distance) << "," << format_double(p.dq_mean) << ","
           << format_double(p.dq_se) << "," << p.n << "," << p.k << "," << p.seed << "\n";
    return os.str();
}

inline std::vector<SweepPoint> parse_sweep_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kSweepCsvHeader)
        throw std::invalid_argument("bad sweep csv header");
    std::vector<SweepPoint> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 6) throw std::invalid_argument("bad sweep csv row: " + line);
        SweepPoint p;
        p.distance = parse_double(f[0]);
        p.dq_mean = parse_double(f[1]);
        p.dq_se = parse_double(f[2]);
        p.n = parse_int(f[3]);
        p.k = static_cast<int>(parse_int(f[4]));
        p.seed = parse_uint(f[5]);
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report JSON (snake_case mirror of the report fields)

inline nlohmann::ordered_json report_json(const SbiReport& rep) {
    nlohmann::ordered_json j;
    j["design"] = rep.design;
    j["family"] = rep.family;
    j["n"] = rep.config.n;
    j["k"] = rep.config.k;
    j["lambda"] = rep.config.lambda;
    j["epochs"] = rep.config.opt.epochs;
    j["minibatch"] = rep.config.opt.minibatch;
    j["threshold_mode"] = rep.config.threshold.mode == ThresholdSpec::Mode::FractionOfTrueEffect
                              ? "fraction_of_true_effect"
                              : "absolute";
    j["threshold_value"] = rep.config.threshold.value;
    j["p"] = rep.p;
    j["seed"] = rep.config.seed;
    j["q_star"] = rep.q_star;
    j["t_used"] = rep.t_used;
    j["mu_dq"] = rep.mu_dq;
    j["sigma_dq"] = rep.sigma_dq;
    // JSON numbers cannot carry infinities (degenerate sigma path)
    j["z"] = std::isfinite(rep.z) ? rep.z
                                  : std::copysign(std::numeric_limits<double>::max(), rep.z);
    j["decision"] = rep.identifiable ? "ID" : "NotID";
    j["failed_trials"] = rep.failed_trials;
    j["lambda_warning"] = rep.lambda_warning;
    nlohmann::ordered_json trials = nlohmann::ordered_json::array();
    for (const auto& t : rep.trials) {
        nlohmann::ordered_json tj;
        tj["q1"] = t.q1;
        tj["q2"] = t.q2;
        tj["dq"] = t.dq;
        tj["loglik1"] = t.loglik1;
        tj["loglik2"] = t.loglik2;
        tj["loglik_star"] = t.loglik_star;
        tj["seed"] = t.seed;
        tj["retries"] = t.retries;
        trials.push_back(tj);
    }
    j["trials"] = trials;
    return j;
}

// ---------------------------------------------------------------------------
// Plain-text archives for datasets and prior samples

inline std::string dataset_text(const Dataset& data) {
    std::ostringstream os;
    bool first = true;
    for (const auto& [name, col] : data.columns) {
        os << (first ? "" : " ") << name;
        first = false;
    }
    if (!data.object_of.empty()) os << " object";
    os << "\n";
    for (Eigen::Index i = 0; i < data.n; ++i) {
        first = true;
        for (const auto& [name, col] : data.columns) {
            os << (first ? "" : " ") << format_double(col[i]);
            first = false;
        }
        if (!data.object_of.empty()) os << " " << data.object_of[i];
        os << "\n";
    }
    return os.str();
}

inline Dataset parse_dataset_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("empty dataset text");
    std::istringstream hs(line);
    std::vector<std::string> names;
    std::string tok;
    while (hs >> tok) names.push_back(tok);
    const bool has_object = !names.empty() && names.back() == "object";
    if (has_object) names.pop_back();
    std::vector<std::vector<double>> cols(names.size());
    std::vector<int> object_of;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        for (std::size_t c = 0; c < names.size(); ++c) {
            if (!(ls >> tok)) throw std::invalid_argument("short dataset row");
            cols[c].push_back(parse_double(tok));
        }
        if (has_object) {
            if (!(ls >> tok)) throw std::invalid_argument("missing object field");
            object_of.push_back(static_cast<int>(parse_int(tok)));
        }
    }
    Dataset data;
    data.n = cols.empty() ? 0 : static_cast<Eigen::Index>(cols[0].size());
    for (std::size_t c = 0; c < names.size(); ++c) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(cols[c].size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cols[c][static_cast<std::size_t>(i)];
        data.columns[names[c]] = v;
    }
    data.object_of = object_of;
    return data;
}

inline std::string sample_text(const ScmSample& s) {
    std::ostringstream os;
    os << "params " << s.params.size() << "\n";
    for (const auto& [name, v] : s.params) {
        os << name;
        for (Eigen::Index i = 0; i < v.size(); ++i) os << " " << format_double(v[i]);
        os << "\n";
    }
    os << "confounders " << s.confounders.size() << "\n";
    for (Eigen::Index i = 0; i < s.confounders.size(); ++i)
        os << format_double(s.confounders[i]) << "\n";
    os << "noise " << s.noise.size() << "\n";
    for (const auto& [name, v] : s.noise) {
        os << name;
        for (Eigen::Index i = 0; i < v.size(); ++i) os << " " << format_double(v[i]);
        os << "\n";
    }
    if (s.q_star) os << "q_star " << format_double(*s.q_star) << "\n";
    return os.str();
}

inline ScmSample parse_sample_text(const std::string& text) {
    std::istringstream is(text);
    std::string tok;
    ScmSample s;
    auto read_vec_line = [&](std::istringstream& ls) {
        std::vector<double> vals;
        std::string v;
        while (ls >> v) vals.push_back(parse_double(v));
        Eigen::VectorXd out(static_cast<Eigen::Index>(vals.size()));
        for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = vals[static_cast<std::size_t>(i)];
        return out;
    };
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("empty sample text");
    {
        std::istringstream hs(line);
        std::size_t count = 0;
        hs >> tok >> count;
        if (tok != "params") throw std::invalid_argument("expected params section");
        for (std::size_t i = 0; i < count; ++i) {
            std::getline(is, line);
            std::istringstream ls(line);
            std::string name;
            ls >> name;
            s.params[name] = read_vec_line(ls);
        }
    }
    std::getline(is, line);
    {
        std::istringstream hs(line);
        Eigen::Index count = 0;
        hs >> tok >> count;
        if (tok != "confounders") throw std::invalid_argument("expected confounders section");
        s.confounders.resize(count);
        for (Eigen::Index i = 0; i < count; ++i) {
            std::getline(is, line);
            s.confounders[i] = parse_double(line);
        }
    }
    std::getline(is, line);
    {
        std::istringstream hs(line);
        std::size_t count = 0;
        hs >> tok >> count;
        if (tok != "noise") throw std::invalid_argument("expected noise section");
        for (std::size_t i = 0; i < count; ++i) {
            std::getline(is, line);
            std::istringstream ls(line);
            std::string name;
            ls >> name;
            s.noise[name] = read_vec_line(ls);
        }
    }
    if (std::getline(is, line) && !line.empty()) {
        std::istringstream ls(line);
        ls >> tok;
        if (tok == "q_star") {
            ls >> tok;
            s.q_star = parse_double(tok);
        }
    }
    return s;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace sbi::stats_io
