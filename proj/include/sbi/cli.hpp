#pragma once

#include "sbi/baseline.hpp"
#include "sbi/gradcheck_suite.hpp"
#include "sbi/stats_io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sbi::cli {

// Flat key = value configuration file; '#' starts a comment. Values from the
// command line take precedence over the file.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::map<std::string, std::string> out;
    std::istringstream is(stats_io::read_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument(path + ": empty key");
        out[key] = val;
    }
    return out;
}

namespace detail {

inline std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(parse_double(cur));
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    return out;
}

struct Options {
    std::string config_path;
    std::string out_dir = ".";
    std::string design;
    std::string family;
    std::uint64_t seed = 0;
    bool seed_given = false;
    long long n = 0;  // 0 = mode default
    int k = 0;
    double lambda = 1.0;
    int epochs = 0;
    int minibatch = 0;
    double p = 0.05;
    double t_fraction = 0.05;
    std::optional<double> t_absolute;
    double t_prime = 1.0;
    double t_double_prime = 0.0;
    std::optional<double> cate_at;
    int jobs = 1;
    bool gp_exact_repulsion = false;
    // gradcheck
    int states = 10;
    // diagnostics
    std::string n_grid = "100,1000,10000";
    int reps = 10;
    double delta = 0.1;
    // baseline
    int warmup_steps = 500;
    int perturb_steps = 100;
    double delta_s = 0.01;
    int repetitions = 100;
    bool baseline_restart = false;
    // sweep
    std::string distances = "0,0.5,1,1.5,2";
};

inline void apply_config_map(const std::map<std::string, std::string>& kv, CLI::App& app) {
    // config supplies values only for options the command line left alone
    for (const auto& [key, value] : kv) {
        CLI::Option* opt = nullptr;
        for (auto* candidate : app.get_options()) {
            const std::string name = candidate->get_lnames().empty()
                                         ? std::string()
                                         : candidate->get_lnames().front();
            if (name == key) {
                opt = candidate;
                break;
            }
        }
        if (!opt) {
            for (auto* sub : app.get_subcommands({})) {
                for (auto* candidate : sub->get_options()) {
                    const std::string name = candidate->get_lnames().empty()
                                                 ? std::string()
                                                 : candidate->get_lnames().front();
                    if (name == key) {
                        opt = candidate;
                        break;
                    }
                }
                if (opt) break;
            }
        }
        if (!opt) throw std::invalid_argument("unknown config key: " + key);
        if (opt->count() == 0) {
            opt->add_result(value);
            opt->run_callback();
        }
    }
}

inline SbiConfig sbi_config_from(const Options& o, Family family) {
    SbiConfig cfg;
    cfg.n = o.n > 0 ? o.n : (family == Family::Gp ? 50 : 5000);
    cfg.k = o.k > 0 ? o.k : 10;
    cfg.lambda = o.lambda;
    cfg.p = o.p;
    if (o.t_absolute) {
        cfg.threshold.mode = ThresholdSpec::Mode::Absolute;
        cfg.threshold.value = *o.t_absolute;
    } else {
        cfg.threshold.mode = ThresholdSpec::Mode::FractionOfTrueEffect;
        cfg.threshold.value = o.t_fraction;
    }
    cfg.opt.epochs = o.epochs > 0 ? o.epochs : (family == Family::Gp ? 800 : 50);
    cfg.opt.minibatch = o.minibatch > 0 ? o.minibatch : (family == Family::Gp ? 10 : 30);
    cfg.opt.gp_single_instance_repulsion = !o.gp_exact_repulsion;
    cfg.estimand.t_prime = o.t_prime;
    cfg.estimand.t_double_prime = o.t_double_prime;
    if (o.cate_at) {
        cfg.estimand.kind = EstimandKind::Cate;
        cfg.estimand.conditioning_var = "X";
        cfg.estimand.conditioning_value = *o.cate_at;
    }
    cfg.seed = o.seed;
    cfg.jobs = o.jobs;
    return cfg;
}

inline void write_output(const Options& o, const std::string& name, const std::string& content) {
    std::filesystem::create_directories(o.out_dir);
    const std::string path = (std::filesystem::path(o.out_dir) / name).string();
    stats_io::write_file(path, content);
    std::cout << "wrote " << path << "\n";
}

}  // namespace detail

inline int run_main(const std::vector<std::string>& args) {
    detail::Options o;
    CLI::App app{"simulation-based identifiability tester for structural causal models"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", o.config_path, "flat key = value configuration file");
    app.add_option("--out", o.out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", o.seed, "master seed");
    app.add_option("--jobs", o.jobs, "trial worker threads (default 1, bit-reproducible)");

    auto add_run_options = [&](CLI::App* cmd) {
        cmd->add_option("--design", o.design, "design name")->required();
        cmd->add_option("--family", o.family, "linear | quadratic | gp")->required();
        cmd->add_option("--n", o.n, "instances per trial");
        cmd->add_option("--k", o.k, "simulation trials");
        cmd->add_option("--lambda", o.lambda, "repulsion strength");
        cmd->add_option("--epochs", o.epochs, "optimizer epochs");
        cmd->add_option("--minibatch", o.minibatch, "minibatch size");
        cmd->add_option("--p", o.p, "acceptance probability");
        cmd->add_option("--t-frac", o.t_fraction, "threshold as a fraction of |Q*|");
        cmd->add_option("--t-abs", o.t_absolute, "absolute threshold (overrides --t-frac)");
        cmd->add_option("--tprime", o.t_prime, "intervention value t'");
        cmd->add_option("--tdoubleprime", o.t_double_prime, "intervention value t''");
        cmd->add_option("--cate-at", o.cate_at, "conditional effect at covariate value");
        cmd->add_flag("--gp-exact-repulsion", o.gp_exact_repulsion,
                      "use the exact 1/n effect gradient instead of a sampled instance");
    };

    auto* cmd_run = app.add_subcommand("run", "single identifiability report");
    add_run_options(cmd_run);

    auto* cmd_baseline = app.add_subcommand("baseline", "profile-likelihood identifiability probe");
    cmd_baseline->add_option("--design", o.design)->required();
    cmd_baseline->add_option("--family", o.family)->required();
    cmd_baseline->add_option("--n", o.n);
    cmd_baseline->add_option("--warmup-steps", o.warmup_steps);
    cmd_baseline->add_option("--perturb-steps", o.perturb_steps);
    cmd_baseline->add_option("--delta-s", o.delta_s);
    cmd_baseline->add_option("--repetitions", o.repetitions);
    cmd_baseline->add_flag("--restart", o.baseline_restart, "restart each walk from the warmup optimum");
    cmd_baseline->add_option("--minibatch", o.minibatch);

    auto* cmd_table = app.add_subcommand("table", "identifiability decisions across the catalog");
    cmd_table->add_option("--family", o.family, "linear | quadratic | gp | all")->required();
    cmd_table->add_option("--n", o.n);
    cmd_table->add_option("--k", o.k);
    cmd_table->add_option("--lambda", o.lambda);
    cmd_table->add_option("--epochs", o.epochs);
    cmd_table->add_option("--minibatch", o.minibatch);
    cmd_table->add_option("--p", o.p);
    cmd_table->add_option("--t-frac", o.t_fraction);

    auto* cmd_sweep = app.add_subcommand("rdd-sweep", "conditional effect vs distance from the threshold");
    cmd_sweep->add_option("--family", o.family, "linear | gp")->required();
    cmd_sweep->add_option("--distances", o.distances, "comma-separated covariate values");
    cmd_sweep->add_option("--n", o.n);
    cmd_sweep->add_option("--k", o.k);
    cmd_sweep->add_option("--lambda", o.lambda);
    cmd_sweep->add_option("--epochs", o.epochs);
    cmd_sweep->add_option("--minibatch", o.minibatch);

    auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suites");
    cmd_gradcheck->add_option("--states", o.states, "random states per design and family");

    auto* cmd_diag = app.add_subcommand("diagnostics", "likelihood-ratio curve against sample size");
    cmd_diag->add_option("--design", o.design)->required();
    cmd_diag->add_option("--family", o.family)->required();
    cmd_diag->add_option("--n-grid", o.n_grid, "comma-separated sample sizes");
    cmd_diag->add_option("--reps", o.reps);
    cmd_diag->add_option("--delta", o.delta, "coefficient perturbation");

    auto* cmd_catalog = app.add_subcommand("catalog", "design catalog");
    auto* cmd_catalog_list = cmd_catalog->add_subcommand("list", "one line per entry");

    std::vector<char*> argv;
    std::vector<std::string> storage = args;
    std::string prog = "sbi";
    argv.push_back(prog.data());
    for (auto& a : storage) argv.push_back(a.data());

    try {
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            return app.exit(e) == 0 ? 0 : 2;
        }

        if (!o.config_path.empty()) {
            detail::apply_config_map(parse_config_file(o.config_path), app);
        }
        if (seed_opt->count() == 0) {
            // config may have filled it; otherwise fall back to SBI_SEED
            if (const char* env = std::getenv("SBI_SEED");
                env && app.get_option("--seed")->count() == 0)
                o.seed = parse_uint(env);
        }

        if (cmd_catalog->parsed()) {
            if (cmd_catalog_list->parsed() || cmd_catalog->get_subcommands().empty())
                std::cout << catalog_list_text();
            return 0;
        }
        if (cmd_gradcheck->parsed()) {
            GradcheckSummary summary = run_gradcheck_suite(o.states, 1e-4, 1e-7,
                                                           derive_seed(o.seed, 97), &std::cout);
            std::cout << (summary.ok ? "gradcheck passed" : "gradcheck FAILED") << " ("
                      << summary.cases_run << " states)\n";
            return summary.ok ? 0 : 1;
        }
        if (cmd_run->parsed()) {
            DesignSpec d = get_design(o.design, o.family);
            SbiConfig cfg = detail::sbi_config_from(o, d.family);
            SbiReport rep = run(d, cfg);
            detail::write_output(o, "run_" + o.design + "_" + o.family + ".json",
                                 stats_io::report_json(rep).dump(2) + "\n");
            std::cout << "decision: " << (rep.identifiable ? "ID" : "NotID")
                      << "  mu_dq=" << format_double(rep.mu_dq)
                      << "  q_star=" << format_double(rep.q_star) << "\n";
            if (rep.lambda_warning)
                std::cerr << "warning: particle likelihood fell well below the generating "
                             "model; consider reducing lambda\n";
            return 0;
        }
        if (cmd_baseline->parsed()) {
            DesignSpec d = get_design(o.design, o.family);
            baseline::BaselineConfig cfg;
            cfg.warmup_steps = o.warmup_steps;
            cfg.perturb_steps = o.perturb_steps;
            cfg.delta_s = o.delta_s;
            cfg.repetitions = o.repetitions;
            cfg.restart_each_rep = o.baseline_restart;
            cfg.minibatch = o.minibatch > 0 ? o.minibatch : (d.family == Family::Gp ? 10 : 30);
            cfg.seed = o.seed;
            const Eigen::Index n = o.n > 0 ? o.n : (d.family == Family::Gp ? 50 : 2000);
            Rng rng(derive_seed(o.seed, 0));
            ScmSample star = scm::sample_prior(d, n, rng);
            Dataset data = scm::simulate(d, star);
            EstimandSpec est;
            est.t_prime = o.t_prime;
            est.t_double_prime = o.t_double_prime;
            auto range = baseline::profile_range(d, data, est, cfg);
            const double q_star = true_effect(d, star, data, est);
            nlohmann::ordered_json j;
            j["design"] = o.design;
            j["family"] = o.family;
            j["n"] = n;
            j["seed"] = o.seed;
            j["q_star"] = q_star;
            j["q_warmup"] = range.q_warmup;
            j["q_min"] = range.q_min;
            j["q_max"] = range.q_max;
            j["range"] = range.range;
            j["range_normalized"] =
                std::abs(q_star) > 1e-12 ? range.range / std::abs(q_star) : range.range;
            j["aborted_perturbations"] = range.aborted_perturbations;
            j["warmup_steps"] = cfg.warmup_steps;
            j["perturb_steps"] = cfg.perturb_steps;
            j["delta_s"] = cfg.delta_s;
            j["repetitions"] = cfg.repetitions;
            detail::write_output(o, "baseline_" + o.design + "_" + o.family + ".json",
                                 j.dump(2) + "\n");
            std::cout << "baseline range: " << format_double(range.range) << "\n";
            return 0;
        }
        if (cmd_table->parsed()) {
            std::vector<Family> fams;
            if (o.family == "all")
                fams = {Family::Linear, Family::Quadratic, Family::Gp};
            else
                fams = {family_from_name(o.family)};
            detail::Options table_opts = o;
            SbiConfig base = detail::sbi_config_from(table_opts, fams.front());
            base.n = o.n;  // 0 lets table_reproduce pick family defaults
            base.k = o.k;
            auto rows = stats_io::table_reproduce(fams, base, o.seed);
            detail::write_output(o, "table_all_" + o.family + ".csv", stats_io::table_csv(rows));
            return 0;
        }
        if (cmd_sweep->parsed()) {
            Family fam = family_from_name(o.family);
            SbiConfig base = detail::sbi_config_from(o, fam);
            auto points = stats_io::rdd_cate_sweep(fam, detail::parse_double_list(o.distances),
                                                   base, o.seed);
            detail::write_output(o, "rdd-sweep_rdd_" + o.family + ".csv",
                                 stats_io::sweep_csv(points));
            nlohmann::ordered_json j = nlohmann::ordered_json::array();
            for (const auto& pt : points) {
                nlohmann::ordered_json pj;
                pj["distance"] = pt.distance;
                pj["dq_mean"] = pt.dq_mean;
                pj["dq_se"] = pt.dq_se;
                pj["q_star"] = pt.q_star;
                pj["decision"] = pt.decision_id ? "ID" : "NotID";
                j.push_back(pj);
            }
            detail::write_output(o, "rdd-sweep_rdd_" + o.family + ".json", j.dump(2) + "\n");
            return 0;
        }
        if (cmd_diag->parsed()) {
            DesignSpec d = get_design(o.design, o.family);
            std::vector<Eigen::Index> grid;
            for (double v : detail::parse_double_list(o.n_grid))
                grid.push_back(static_cast<Eigen::Index>(v));
            auto pts = likelihood_ratio_diagnostic(d, grid, o.reps, o.delta,
                                                   derive_seed(o.seed, 11));
            std::ostringstream os;
            os << "n,mean_log_lr\n";
            for (const auto& p : pts)
                os << p.n << "," << format_double(p.mean_log_lr) << "\n";
            detail::write_output(o, "diagnostics_" + o.design + "_" + o.family + ".csv", os.str());
            return 0;
        }
        return 2;
    } catch (const TrialAbort& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 1;
    } catch (const SingularMatrixError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

inline int run_main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_main(args);
}

}  // namespace sbi::cli
