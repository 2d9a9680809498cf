// Command-line front end: run scenarios, sweep seeds, compare backoff
// policies, and run the property suite. Exit codes: 0 ok, 1 invariant
// violation or failed check, 2 usage/config error.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "failover/checks.hpp"
#include "failover/sim/runner.hpp"

namespace fs = std::filesystem;
using namespace failover;
using namespace failover::sim;

namespace {

ScenarioConfig default_config() {
    ScenarioConfig config;
    config.scenario = "fault-free";
    config.regions = {{"regionA", 1}, {"regionB", 2}, {"regionC", 3}};
    config.policy = BackoffPolicyKind::Adaptive;
    return config;
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f << body;
}

void write_trace(const fs::path& path, const std::vector<TraceEvent>& trace) {
    std::ofstream f(path);
    for (const auto& ev : trace) {
        nlohmann::json j{{"t_us", ev.time_us}, {"kind", ev.kind}, {"actor", ev.actor},
                         {"detail", ev.detail}};
        f << j.dump() << "\n";
    }
}

int cmd_run(const std::string& config_path, std::uint64_t seed, int runs, const std::string& out,
            const std::string& policy, int proposers, bool trace) {
    ScenarioConfig config = config_path.empty() ? default_config() : load_config_file(config_path);
    if (!policy.empty()) {
        config.policy = policy == "adaptive" ? BackoffPolicyKind::Adaptive
                                             : BackoffPolicyKind::Static;
    }
    if (proposers > 0) {
        config.regions.clear();
        for (int i = 0; i < proposers; ++i) {
            config.regions.push_back({"region" + std::to_string(i), i + 1});
        }
    }
    config.seed = seed;
    config.trace = trace;

    fs::create_directories(out);
    std::vector<RunRow> rows;
    for (int i = 0; i < runs; ++i) {
        const std::uint64_t run_seed = seed + static_cast<std::uint64_t>(i);
        SimResult result = sim_run(config, run_seed);
        rows.push_back(summarize_run(config, run_seed, result.metrics));
        if (trace) {
            write_trace(fs::path(out) / ("trace_" + std::to_string(run_seed) + ".jsonl"),
                        result.trace);
        }
        write_text(fs::path(out) / ("metrics_" + std::to_string(run_seed) + ".json"),
                   metrics_to_json(result.metrics).dump(2) + "\n");
    }
    write_csv_file((fs::path(out) / "results.csv").string(), rows);
    write_text(fs::path(out) / "config.json", config_to_json(config).dump(2) + "\n");
    for (const auto& row : rows) {
        std::cout << row.scenario << " seed=" << row.seed << " policy=" << row.policy
                  << " failure_rate=" << row.failure_rate << " lost_writes=" << row.lost_writes
                  << "\n";
    }
    return 0;
}

int cmd_compare(int runs, std::uint64_t base_seed, const std::string& out, double hours) {
    fs::create_directories(out);
    std::ostringstream csv;
    csv << "policy,proposers,runs,mean_failure_rate,ci95_low,ci95_high,mean_cas_conflicts\n";
    for (BackoffPolicyKind policy : {BackoffPolicyKind::Static, BackoffPolicyKind::Adaptive}) {
        for (int proposers : {3, 5, 7, 9}) {
            ScenarioConfig config = scenario_dueling_proposers(proposers, policy, hours);
            std::vector<MetricsRecord> metrics =
                sweep_metrics(config, base_seed, runs, /*parallel=*/true);
            double sum = 0, sumsq = 0, conflicts = 0;
            for (const auto& m : metrics) {
                sum += m.failure_rate;
                sumsq += m.failure_rate * m.failure_rate;
                conflicts += static_cast<double>(m.cas_conflicts);
            }
            const double n = static_cast<double>(runs);
            const double mean = sum / n;
            const char* name = policy == BackoffPolicyKind::Adaptive ? "adaptive" : "static";
            csv << name << ',' << proposers << ',' << runs << ',' << mean << ',';
            if (runs > 1) {
                const double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1));
                const double half = 1.96 * std::sqrt(var / n);
                csv << (mean - half) << ',' << (mean + half);
            } else {
                csv << ',';
            }
            csv << ',' << conflicts / n << '\n';
            std::cout << name << " proposers=" << proposers << " mean_failure_rate=" << mean
                      << std::endl;
        }
    }
    write_text(fs::path(out) / "compare.csv", csv.str());
    return 0;
}

int cmd_check(std::uint64_t seed, bool inject_bug) {
    std::cout << "property suite (seed=" << seed << ")\n";
    bool all_passed = true;
    for (const CheckResult& r : run_all_checks(seed, inject_bug)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        all_passed = all_passed && r.passed;
    }
    return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"geo-failover simulator"};
    app.require_subcommand(1);

    std::string config_path, out = ".", policy;
    std::uint64_t seed = 1;
    int runs = 1, proposers = 0;
    std::string trace = "off";
    double hours = 1.0;
    bool inject_bug = false;

    CLI::App* run = app.add_subcommand("run", "run a scenario and emit metrics CSV");
    run->add_option("--config", config_path, "scenario config JSON");
    run->add_option("--seed", seed, "base seed");
    run->add_option("--runs", runs, "number of seeds (seed, seed+1, ...)");
    run->add_option("--out", out, "output directory");
    run->add_option("--policy", policy, "backoff policy override")
        ->check(CLI::IsMember({"static", "adaptive"}));
    run->add_option("--proposers", proposers, "region/proposer count override");
    run->add_option("--trace", trace, "trace output")->check(CLI::IsMember({"on", "off"}));

    CLI::App* compare = app.add_subcommand("compare", "static vs adaptive policy sweep");
    compare->add_option("--runs", runs, "runs per (policy, proposers) cell");
    compare->add_option("--seed", seed, "base seed");
    compare->add_option("--out", out, "output directory");
    compare->add_option("--hours", hours, "simulated hours per run");

    CLI::App* check = app.add_subcommand("check", "run the property suite");
    check->add_option("--seed", seed, "property suite seed");
    check->add_flag("--inject-acceptor-bug", inject_bug,
                    "use a deliberately broken acceptor rule (must fail)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            return cmd_run(config_path, seed, runs, out, policy, proposers, trace == "on");
        }
        if (compare->parsed()) return cmd_compare(runs, seed, out, hours);
        return cmd_check(seed, inject_bug);
    } catch (const failover::sim::InvariantViolation& e) {
        std::cerr << "INVARIANT VIOLATION: " << e.what() << "\n";
        for (const auto& ev : e.trace) {
            std::cerr << "  t=" << ev.time_us << " " << ev.kind << " " << ev.actor << " "
                      << ev.detail << "\n";
        }
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
