// Conflict-mitigation math for dueling proposers: static exponential
// backoff, online phase-2 duration statistics, adaptive NAK delay, and
// time-division-multiplexed proposal spacing.
#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>

namespace failover {

// Simulated time and durations are integer microseconds.
using SimTime = std::int64_t;
using Duration = std::int64_t;

constexpr Duration microseconds(std::int64_t us) { return us; }
constexpr Duration milliseconds(std::int64_t ms) { return ms * 1000; }
constexpr Duration seconds(std::int64_t s) { return s * 1'000'000; }

// Exponentially weighted mean/variance of successful phase-2 durations,
// updated online. alpha >= 1 degenerates to uniform (1/n) weighting, which
// reproduces the plain batch mean and population variance.
struct SchedulerStats {
    std::uint64_t count = 0;
    double ema_mean = 0.0;             // microseconds
    double variance_accumulator = 0.0;  // microseconds^2
    double alpha = 0.1;

    double stddev() const { return std::sqrt(variance_accumulator); }

    friend bool operator==(const SchedulerStats&, const SchedulerStats&) = default;
};

inline SchedulerStats record_phase2_duration(SchedulerStats stats, Duration d) {
    assert(d >= 0);
    stats.count += 1;
    // The first sample seeds the estimate exactly: mean = sample, sigma = 0.
    const double a = stats.count == 1
                         ? 1.0
                         : (stats.alpha >= 1.0 ? 1.0 / static_cast<double>(stats.count)
                                               : stats.alpha);
    const double delta = static_cast<double>(d) - stats.ema_mean;
    stats.ema_mean += a * delta;
    stats.variance_accumulator = (1.0 - a) * (stats.variance_accumulator + a * delta * delta);
    return stats;
}

inline constexpr unsigned kMaxBackoffExponent = 10;

// Upper bound scale 2^(attempt-1), capped.
inline double backoff_scale(unsigned attempt) {
    assert(attempt >= 1);
    const unsigned exponent = attempt - 1 > kMaxBackoffExponent ? kMaxBackoffExponent : attempt - 1;
    return static_cast<double>(std::uint64_t{1} << exponent);
}

// delta * U(0, 2^(attempt-1))
template <typename Rng>
Duration static_nak_delay(unsigned attempt, Duration delta, Rng& rng) {
    assert(attempt >= 1 && delta > 0);
    std::uniform_real_distribution<double> uniform(0.0, backoff_scale(attempt));
    return static_cast<Duration>(static_cast<double>(delta) * uniform(rng));
}

// (mu_ema + sigma) * U(0, 2^(attempt-1)); falls back to the static policy
// until a first phase-2 duration has been observed.
template <typename Rng>
Duration adaptive_nak_delay(const SchedulerStats& stats, unsigned attempt, Duration fallback_delta,
                            Rng& rng) {
    assert(attempt >= 1);
    if (stats.count == 0) return static_nak_delay(attempt, fallback_delta, rng);
    std::uniform_real_distribution<double> uniform(0.0, backoff_scale(attempt));
    return static_cast<Duration>((stats.ema_mean + stats.stddev()) * uniform(rng));
}

struct ProposalTiming {
    SimTime phase1a_start = 0;
    SimTime phase2a_start = 0;
    SimTime phase2b_end = 0;
    SimTime proposal_end = 0;
    Duration interval = seconds(30);
};

// Shift the next proposal start so proposers space themselves apart:
// max(0, T_interval - D_proposal).
inline Duration next_proposal_delay(const ProposalTiming& timing) {
    const Duration proposal = timing.proposal_end - timing.phase1a_start;
    const Duration delay = timing.interval - proposal;
    return delay < 0 ? 0 : delay;
}

inline Duration phase2_duration(const ProposalTiming& timing) {
    return timing.phase2b_end - timing.phase2a_start;
}

}  // namespace failover
