// qbsde: run scenario files or built-in presets.
//
//   qbsde check  --preset system2-thm21
//   qbsde solve  --config scenarios/thm31-certified.json --out out
//   qbsde scan   --preset system2-thm21 --axis vartheta --log-grid 1e-3,1e1,17
//   qbsde ladder --preset ladder-tanh
//   qbsde presets list | qbsde presets dump NAME

#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "qbsde/harness/presets.hpp"
#include "qbsde/harness/runner.hpp"

namespace h = qbsde::harness;

namespace {

struct Options {
    std::vector<std::string> configs;
    std::vector<std::string> presets;
    std::string out = "out";
    unsigned threads = 1;
    std::optional<std::uint64_t> seed;
    std::string axis;
    std::vector<double> values;
    std::string log_grid;
    bool solve = false;
};

struct Job {
    std::string label;
    h::ScenarioConfig config;
};

std::vector<double> log_grid(const std::string& spec) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    for (std::string s; std::getline(ss, s, ',');) parts.push_back(s);
    if (parts.size() != 3) throw h::stage_failure(h::ExitCode::usage, "--log-grid expects lo,hi,count");
    const double lo = std::stod(parts[0]), hi = std::stod(parts[1]);
    const int count = std::stoi(parts[2]);
    if (!(lo > 0.0) || !(hi > 0.0) || count < 1)
        throw h::stage_failure(h::ExitCode::usage, "--log-grid needs lo, hi > 0 and count >= 1");
    const double a = std::log10(lo), b = std::log10(hi);
    std::vector<double> v;
    for (int k = 0; k < count; ++k) v.push_back(std::pow(10.0, count == 1 ? a : a + (b - a) * k / (count - 1)));
    return v;
}

std::vector<Job> load_jobs(const Options& o) {
    std::vector<Job> jobs;
    for (const auto& path : o.configs) {
        std::ifstream f(path);
        if (!f) throw h::stage_failure(h::ExitCode::config, "cannot open config '" + path + "'");
        h::json j;
        try {
            j = h::json::parse(f);
        } catch (const h::json::exception& e) {
            throw h::stage_failure(h::ExitCode::config, path + ": " + e.what());
        }
        try {
            jobs.push_back({path, h::config_from_json(j)});
        } catch (const qbsde::config_error& e) {
            throw h::stage_failure(h::ExitCode::config, path + ": " + e.what());
        }
    }
    for (const auto& name : o.presets) {
        try {
            jobs.push_back({name, h::preset(name)});
        } catch (const qbsde::config_error& e) {
            throw h::stage_failure(h::ExitCode::usage, e.what());
        }
    }
    if (jobs.empty()) throw h::stage_failure(h::ExitCode::usage, "give at least one --config or --preset");
    if (o.seed)
        for (auto& j : jobs) j.config.seed = *o.seed;
    return jobs;
}

int run_verb(h::Verb verb, const Options& o) {
    const auto jobs = load_jobs(o);
    h::ScanRequest scan;
    if (verb == h::Verb::scan) {
        if (o.axis.empty()) throw h::stage_failure(h::ExitCode::usage, "scan needs --axis");
        scan.axis = o.axis;
        scan.values = o.log_grid.empty() ? o.values : log_grid(o.log_grid);
        scan.solve = o.solve;
    }

    std::vector<int> codes(jobs.size(), 0);
    std::vector<std::string> lines(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& job = jobs[i];
            const auto outcome = h::run_scenario(job.config, verb, scan);
            const auto dir = std::filesystem::path(o.out) / job.config.name;
            const auto code = h::write_outputs(outcome, job.config, dir);
            codes[i] = int(code);
            const auto& st = outcome.report["status"];
            std::string line = job.config.name + ": " + h::stage_name(code) + " (exit " + std::to_string(int(code)) + ")";
            if (code == h::ExitCode::output)
                line += " cannot write " + dir.string();
            else if (!st["message"].get<std::string>().empty())
                line += " " + st["message"].get<std::string>();
            else if (outcome.report["verdict"].is_object())
                line += " verdict " + outcome.report["verdict"]["status"].get<std::string>();
            if (outcome.report["solve"].is_object())
                line += outcome.report["solve"]["converged"].get<bool>() ? ", converged" : ", not converged";
            lines[i] = line;
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(o.threads, unsigned(jobs.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (const auto& l : lines) std::cout << l << "\n";
    for (int c : codes)
        if (c != 0) return c;
    return 0;
}

void add_common(CLI::App* app, Options& o) {
    app->add_option("--config", o.configs, "Scenario file (repeatable)");
    app->add_option("--preset", o.presets, "Built-in scenario name (repeatable)");
    app->add_option("--out", o.out, "Output directory; each scenario writes to <out>/<name>/");
    app->add_option("--threads", o.threads, "Scenarios run in parallel")->check(CLI::PositiveNumber);
    app->add_option("--seed", o.seed, "Override run.seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coupled quadratic BSDE lattice toolkit"};
    app.require_subcommand(1);
    Options o;

    struct VerbDef {
        const char* name;
        const char* help;
        h::Verb verb;
    };
    const VerbDef verbs[] = {
        {"check", "Evaluate coefficient certificates and the condition verdict", h::Verb::check},
        {"solve", "Verdict plus fixed-point solve", h::Verb::solve},
        {"probe", "Solve plus uniqueness probe from random restarts", h::Verb::probe},
        {"ladder", "Scheme vs exponential-transform oracle over run.ladder", h::Verb::ladder},
        {"scan", "Verdict (and optional solve) over a coefficient grid", h::Verb::scan},
    };
    std::vector<std::pair<CLI::App*, h::Verb>> subs;
    for (const auto& v : verbs) {
        auto* sub = app.add_subcommand(v.name, v.help);
        add_common(sub, o);
        subs.emplace_back(sub, v.verb);
        if (v.verb == h::Verb::scan) {
            sub->add_option("--axis", o.axis, "theta, vartheta, gamma, eta, alpha, beta (suffix 1/2), C, delta, T");
            sub->add_option("--values", o.values, "Explicit axis values")->delimiter(',');
            sub->add_option("--log-grid", o.log_grid, "lo,hi,count on a log10 grid");
            sub->add_flag("--solve", o.solve, "Also solve at every grid point");
        }
    }
    auto* presets = app.add_subcommand("presets", "List or print built-in scenarios");
    std::string action, name;
    presets->add_option("action", action, "list | dump")->required()->check(CLI::IsMember({"list", "dump"}));
    presets->add_option("name", name, "Preset to dump");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : int(h::ExitCode::usage);
    }

    try {
        if (presets->parsed()) {
            if (action == "list") {
                for (const auto& p : h::preset_names()) std::cout << p << "\n";
                return 0;
            }
            std::cout << h::config_to_json(h::preset(name)).dump(2) << "\n";
            return 0;
        }
        for (const auto& [sub, verb] : subs)
            if (sub->parsed()) return run_verb(verb, o);
    } catch (const h::stage_failure& e) {
        std::cerr << "qbsde: " << e.what() << "\n";
        return int(e.code());
    } catch (const qbsde::config_error& e) {
        std::cerr << "qbsde: " << e.what() << "\n";
        return int(h::ExitCode::config);
    } catch (const std::exception& e) {
        std::cerr << "qbsde: " << e.what() << "\n";
        return int(h::ExitCode::usage);
    }
    return int(h::ExitCode::usage);
}
