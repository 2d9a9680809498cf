#include "failover/sim/runner.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace failover::sim {

RunRow summarize_run(const ScenarioConfig& config, std::uint64_t seed, const MetricsRecord& m) {
    RunRow row;
    row.scenario = config.scenario;
    row.seed = seed;
    row.policy = config.policy == BackoffPolicyKind::Adaptive ? "adaptive" : "static";
    row.proposers = static_cast<int>(config.regions.size());
    row.sim_hours = static_cast<double>(config.duration) / 3.6e9;
    row.lease_windows = m.lease_windows_total;
    row.failures = m.lease_windows_failed;
    row.failure_rate = m.failure_rate;
    row.cas_conflicts = m.cas_conflicts;
    row.lost_writes = m.lost_writes;

    std::vector<double> recoveries;
    for (const auto& o : m.outages) {
        if (o.detect_time >= 0 && o.restore_time >= 0) {
            recoveries.push_back(static_cast<double>(o.restore_time - o.outage_start) / 1e6);
        }
    }
    if (!recoveries.empty()) {
        std::sort(recoveries.begin(), recoveries.end());
        row.p50_recovery_s = recoveries[(recoveries.size() - 1) / 2];
        row.max_recovery_s = recoveries.back();
    }
    return row;
}

std::vector<MetricsRecord> sweep_metrics(const ScenarioConfig& config, std::uint64_t base_seed,
                                         int runs, bool parallel) {
    std::vector<MetricsRecord> out(static_cast<std::size_t>(runs));
    std::exception_ptr first_error;

#ifdef _OPENMP
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < runs; ++i) {
            try {
                out[static_cast<std::size_t>(i)] =
                    sim_run(config, base_seed + static_cast<std::uint64_t>(i)).metrics;
            } catch (...) {
#pragma omp critical
                if (!first_error) first_error = std::current_exception();
            }
        }
        if (first_error) std::rethrow_exception(first_error);
        return out;
    }
#else
    (void)parallel;
#endif
    for (int i = 0; i < runs; ++i) {
        out[static_cast<std::size_t>(i)] =
            sim_run(config, base_seed + static_cast<std::uint64_t>(i)).metrics;
    }
    return out;
}

std::vector<RunRow> run_sweep(const ScenarioConfig& config, std::uint64_t base_seed, int runs,
                              bool parallel) {
    const std::vector<MetricsRecord> metrics = sweep_metrics(config, base_seed, runs, parallel);
    std::vector<RunRow> rows;
    rows.reserve(metrics.size());
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        rows.push_back(summarize_run(config, base_seed + i, metrics[i]));
    }
    return rows;
}

std::string rows_to_csv(const std::vector<RunRow>& rows) {
    std::ostringstream out;
    out << "scenario,seed,policy,proposers,sim_hours,lease_windows,failures,failure_rate,"
           "cas_conflicts,p50_recovery_s,max_recovery_s,lost_writes\n";
    for (const auto& r : rows) {
        out << r.scenario << ',' << r.seed << ',' << r.policy << ',' << r.proposers << ','
            << r.sim_hours << ',' << r.lease_windows << ',' << r.failures << ',' << r.failure_rate
            << ',' << r.cas_conflicts << ',' << r.p50_recovery_s << ',' << r.max_recovery_s << ','
            << r.lost_writes << '\n';
    }
    return out.str();
}

void write_csv_file(const std::string& path, const std::vector<RunRow>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << rows_to_csv(rows);
}

}  // namespace failover::sim
