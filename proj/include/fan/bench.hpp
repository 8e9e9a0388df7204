#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fan/registry.hpp"

namespace fan {

struct BenchStats {
  std::size_t iters = 0;
  double min_us = 0;
  double median_us = 0;
  double p95_us = 0;
  double max_us = 0;

  nlohmann::json to_json() const {
    return {{"iters", iters}, {"min_us", min_us}, {"median_us", median_us},
            {"p95_us", p95_us}, {"max_us", max_us}};
  }
};

inline BenchStats summarize_us(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  std::sort(samples.begin(), samples.end());
  auto at = [&](double q) {
    std::size_t i = static_cast<std::size_t>(q * (samples.size() - 1));
    return samples[i];
  };
  return {samples.size(), samples.front(), at(0.5), at(0.95), samples.back()};
}

// Times the full attach path per iteration: signature + verifier checks,
// VM instantiation, and the ON_ATTACH entry, each on a fresh registry.
inline BenchStats bench_attach(std::span<const std::uint8_t> package_bytes,
                               const TrustStore& trust, std::size_t iters,
                               std::size_t warmup = 10) {
  using Clock = std::chrono::steady_clock;
  HostContext ctx;
  HostTable table = make_host_table(ctx);
  std::vector<double> samples;
  samples.reserve(iters);
  for (std::size_t i = 0; i < warmup + iters; ++i) {
    auto t0 = Clock::now();
    auto parsed = parse_and_verify(package_bytes, trust);
    if (!parsed.ok()) throw std::runtime_error("benchmark package failed verification");
    PluginRegistry registry;
    auto attached = registry.attach(
        parsed.value(), PluginRegistry::Scope::circuit(1), &table, kDefaultGasPerEvent,
        [&](Attachment& att) {
          ctx.scratch = &att.scratch;
          return att.fire(EventKind::OnAttach, {}, kDefaultGasPerEvent);
        });
    if (!attached.ok()) throw std::runtime_error("benchmark attach failed");
    auto t1 = Clock::now();
    if (i >= warmup)
      samples.push_back(
          std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  return summarize_us(std::move(samples));
}

inline Bytes read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  return Bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

// Like bench_attach but includes the disk read in every timed iteration.
// The OS file cache stays warm across iterations; the report says so.
inline BenchStats bench_attach_file(const std::string& path, const TrustStore& trust,
                                    std::size_t iters, std::size_t warmup = 10) {
  using Clock = std::chrono::steady_clock;
  if (iters == 0) throw std::invalid_argument("iterations must be positive");
  {
    auto bytes = read_file_bytes(path);  // abort before timing if invalid
    if (!parse_and_verify(bytes, trust).ok())
      throw std::runtime_error("benchmark package failed verification");
  }
  HostContext ctx;
  HostTable table = make_host_table(ctx);
  std::vector<double> samples;
  samples.reserve(iters);
  for (std::size_t i = 0; i < warmup + iters; ++i) {
    auto t0 = Clock::now();
    Bytes bytes = read_file_bytes(path);
    auto parsed = parse_and_verify(bytes, trust);
    PluginRegistry registry;
    auto attached = registry.attach(
        parsed.value(), PluginRegistry::Scope::circuit(1), &table, kDefaultGasPerEvent,
        [&](Attachment& att) {
          ctx.scratch = &att.scratch;
          return att.fire(EventKind::OnAttach, {}, kDefaultGasPerEvent);
        });
    if (!attached.ok()) throw std::runtime_error("benchmark attach failed");
    auto t1 = Clock::now();
    if (i >= warmup)
      samples.push_back(
          std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  return summarize_us(std::move(samples));
}

inline nlohmann::json bench_report(const std::string& package, std::size_t iterations,
                                   std::uint32_t memory_size, const BenchStats& stats,
                                   const std::string& host_description = "") {
  nlohmann::json j = stats.to_json();
  j.erase("iters");  // superseded by "iterations"
  j["package"] = package;
  j["iterations"] = iterations;
  j["memory_size"] = memory_size;
  j["warm"] = true;  // no portable way to drop the page cache unprivileged
  j["host_description"] = host_description;
  return j;
}

}  // namespace fan
