#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "physr/error.hpp"
#include "physr/rng.hpp"

// Simulated-clock comparison of progressive batching against full-batch
// barriers for rollout jobs of uneven length.
namespace physr::dispatch {

struct LatencyModel {
  enum class Kind { Constant, LogNormal, Pareto, Explicit };

  Kind kind = Kind::Constant;
  double a = 1.0;  // Constant: value; LogNormal: mu; Pareto: scale (minimum)
  double b = 0.0;  // LogNormal: sigma; Pareto: shape alpha
  std::vector<double> values;  // Explicit: one latency per job

  static LatencyModel constant(double value) { return {Kind::Constant, value, 0.0, {}}; }
  static LatencyModel lognormal(double mu, double sigma) { return {Kind::LogNormal, mu, sigma, {}}; }
  static LatencyModel pareto(double scale, double alpha) { return {Kind::Pareto, scale, alpha, {}}; }
  static LatencyModel explicit_values(std::vector<double> v) { return {Kind::Explicit, 0.0, 0.0, std::move(v)}; }

  std::vector<double> sample(std::size_t jobs, SeededRng& rng) const {
    std::vector<double> out(jobs);
    for (std::size_t i = 0; i < jobs; ++i) {
      switch (kind) {
        case Kind::Constant: out[i] = a; break;
        case Kind::LogNormal: out[i] = std::exp(a + b * rng.normal()); break;
        case Kind::Pareto: out[i] = a / std::pow(1.0 - rng.uniform01(), 1.0 / b); break;
        case Kind::Explicit:
          if (values.size() != jobs) {
            throw Error(ErrorCode::InvalidArgument, "explicit latencies: " + std::to_string(values.size()) +
                                                        " values for " + std::to_string(jobs) + " jobs");
          }
          out[i] = values[i];
          break;
      }
      if (!(out[i] >= 0.0) || !std::isfinite(out[i])) throw Error(ErrorCode::InvalidArgument, "latency must be finite and >= 0");
    }
    return out;
  }
};

struct JobSpan {
  std::size_t job = 0;
  std::size_t slot = 0;
  double start = 0.0;
  double end = 0.0;
};

struct ScheduleStats {
  double makespan = 0.0;
  double busy_seconds = 0.0;
  double idle_seconds = 0.0;  // slots x makespan - busy
  double utilization = 0.0;
};

struct DispatchResult {
  std::vector<JobSpan> schedule;  // progressive
  std::vector<JobSpan> barrier_schedule;
  ScheduleStats progressive;
  ScheduleStats barrier;
};

namespace detail {

inline ScheduleStats stats_of(const std::vector<JobSpan>& spans, std::size_t slots) {
  ScheduleStats s;
  for (const auto& j : spans) {
    s.makespan = std::max(s.makespan, j.end);
    s.busy_seconds += j.end - j.start;
  }
  const double capacity = static_cast<double>(slots) * s.makespan;
  s.idle_seconds = std::max(0.0, capacity - s.busy_seconds);
  s.utilization = capacity > 0.0 ? s.busy_seconds / capacity : 1.0;
  return s;
}

}  // namespace detail

/// Jobs are all ready at t = 0 and dispatched in index order. Progressive:
/// whenever at least min(min_fill, remaining) slots are free, every free slot
/// takes the next job. Barrier: waves of max_in_flight jobs, each wave waiting
/// for the previous one to finish entirely.
inline DispatchResult simulate(const std::vector<double>& latencies, std::size_t min_fill, std::size_t max_in_flight) {
  const std::size_t jobs = latencies.size();
  if (!(min_fill >= 1 && min_fill <= max_in_flight && max_in_flight <= jobs)) {
    throw Error(ErrorCode::InvalidBounds, "need 1 <= min_fill (" + std::to_string(min_fill) + ") <= max_in_flight (" +
                                              std::to_string(max_in_flight) + ") <= jobs (" + std::to_string(jobs) + ")");
  }
  DispatchResult out;

  std::vector<double> free_at(max_in_flight, 0.0);
  std::size_t next = 0;
  double now = 0.0;
  while (next < jobs) {
    std::size_t free = 0;
    for (double f : free_at) free += (f <= now);
    const std::size_t need = std::min(min_fill, jobs - next);
    if (free >= need) {
      for (std::size_t s = 0; s < max_in_flight && next < jobs; ++s) {
        if (free_at[s] > now) continue;
        out.schedule.push_back({next, s, now, now + latencies[next]});
        free_at[s] = now + latencies[next];
        ++next;
      }
    }
    double upcoming = std::numeric_limits<double>::infinity();
    for (double f : free_at) {
      if (f > now) upcoming = std::min(upcoming, f);
    }
    if (next < jobs) now = upcoming;
  }

  double wave_start = 0.0;
  for (std::size_t first = 0; first < jobs; first += max_in_flight) {
    double wave_end = wave_start;
    for (std::size_t j = first; j < std::min(jobs, first + max_in_flight); ++j) {
      out.barrier_schedule.push_back({j, j - first, wave_start, wave_start + latencies[j]});
      wave_end = std::max(wave_end, wave_start + latencies[j]);
    }
    wave_start = wave_end;
  }

  out.progressive = detail::stats_of(out.schedule, max_in_flight);
  out.barrier = detail::stats_of(out.barrier_schedule, max_in_flight);
  return out;
}

inline DispatchResult progressive_dispatch(std::size_t jobs, std::size_t min_fill, std::size_t max_in_flight,
                                           const LatencyModel& latency_model, SeededRng& rng) {
  if (!(min_fill >= 1 && min_fill <= max_in_flight && max_in_flight <= jobs)) {
    throw Error(ErrorCode::InvalidBounds, "need 1 <= min_fill <= max_in_flight <= jobs");
  }
  return simulate(latency_model.sample(jobs, rng), min_fill, max_in_flight);
}

}  // namespace physr::dispatch
