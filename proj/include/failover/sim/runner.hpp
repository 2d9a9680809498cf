// Seed sweeps over independent simulation runs, result rows, and CSV output.
#pragma once

#include <string>
#include <vector>

#include "failover/sim/sim.hpp"

namespace failover::sim {

struct RunRow {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string policy;
    int proposers = 0;
    double sim_hours = 0.0;
    std::uint64_t lease_windows = 0;
    std::uint64_t failures = 0;
    double failure_rate = 0.0;
    std::uint64_t cas_conflicts = 0;
    double p50_recovery_s = 0.0;
    double max_recovery_s = 0.0;
    std::uint64_t lost_writes = 0;
};

RunRow summarize_run(const ScenarioConfig& config, std::uint64_t seed, const MetricsRecord& m);

// Runs `runs` independent simulations seeded base_seed, base_seed+1, ...
// Each run is single-threaded and deterministic; with parallel=true the
// sweep distributes runs across OpenMP threads, and the results are
// identical to the serial sweep.
std::vector<MetricsRecord> sweep_metrics(const ScenarioConfig& config, std::uint64_t base_seed,
                                         int runs, bool parallel);

std::vector<RunRow> run_sweep(const ScenarioConfig& config, std::uint64_t base_seed, int runs,
                              bool parallel);

std::string rows_to_csv(const std::vector<RunRow>& rows);
void write_csv_file(const std::string& path, const std::vector<RunRow>& rows);

}  // namespace failover::sim
