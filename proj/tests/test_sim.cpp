#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "fan/sim.hpp"

using namespace fan;
using nlohmann::json;

namespace {

json load_scenario(const std::string& name) {
  std::ifstream f(std::string(FAN_SOURCE_DIR) + "/scenarios/" + name);
  REQUIRE(f.good());
  return json::parse(f);
}

}  // namespace

TEST_CASE("unknown-feature scenario: kill, report, no over-tolerance") {
  json cfg = load_scenario("unknown_feature.json");
  SimResult r = run_sim(cfg);
  for (const auto& f : r.failures) UNSCOPED_INFO(f);
  CHECK(r.ok());
  REQUIRE(r.reports.size() == 1);
  CHECK(r.reports[0]["reason"] == "UnknownFeature");
  CHECK(r.reports[0]["relay_cmd"] == 48);
}

TEST_CASE("padding scenario: cover traffic flows, data unharmed, hops clean") {
  json cfg = load_scenario("padding.json");
  SimResult r = run_sim(cfg);
  for (const auto& f : r.failures) UNSCOPED_INFO(f);
  CHECK(r.ok());
}

TEST_CASE("same seed gives a byte-identical event trace") {
  json cfg = load_scenario("padding.json");
  SimResult a = run_sim(cfg);
  SimResult b = run_sim(cfg);
  REQUIRE(a.trace.size() == b.trace.size());
  CHECK(a.trace == b.trace);

  SimResult c = run_sim(load_scenario("unknown_feature.json"));
  SimResult d = run_sim(load_scenario("unknown_feature.json"));
  CHECK(c.trace == d.trace);
}

TEST_CASE("failed expectations are reported, not thrown") {
  json cfg = load_scenario("unknown_feature.json");
  cfg["expect"] = json::array({{{"kind", "report_count"}, {"count", 99}}});
  SimResult r = run_sim(cfg);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].find("report_count") != std::string::npos);
}

TEST_CASE("minimal inline scenario") {
  json cfg = {
      {"seed", 3},
      {"duration_ms", 100},
      {"relays", json::array({{{"name", "r1"}}})},
      {"clients", json::array({{{"name", "c"}}})},
      {"links", json::array({{{"a", "c"}, {"b", "r1"}, {"latency_ms", 1}}})},
      {"script",
       json::array({{{"at_ms", 0}, {"do", "build_circuit"}, {"client", "c"},
                     {"route", json::array({"r1"})}, {"circuit", "x"}},
                    {{"at_ms", 10}, {"do", "send_data"}, {"circuit", "x"},
                     {"data", "hi"}}})},
      {"expect", json::array({{{"kind", "delivered"}, {"node", "c"}, {"data", "hi"}},
                              {{"kind", "circuit_state"}, {"circuit", "x"},
                               {"state", "open"}}})},
  };
  SimResult r = run_sim(cfg);
  for (const auto& f : r.failures) UNSCOPED_INFO(f);
  CHECK(r.ok());
  CHECK(r.cells_delivered == 2);  // exit sink + client echo
}

TEST_CASE("globally preloaded relay plugin answers without injection") {
  json cfg = {
      {"seed", 4},
      {"duration_ms", 200},
      {"relays", json::array({{{"name", "r1"},
                               {"global_plugins", json::array({"counter"})}}})},
      {"clients", json::array({{{"name", "c"}}})},
      {"links", json::array({{{"a", "c"}, {"b", "r1"}}})},
      {"script",
       json::array({{{"at_ms", 0}, {"do", "build_circuit"}, {"client", "c"},
                     {"route", json::array({"r1"})}, {"circuit", "x"}},
                    {{"at_ms", 10}, {"do", "attach_local"}, {"circuit", "x"},
                     {"plugin", "counter"}},
                    {{"at_ms", 20}, {"do", "send_feature"}, {"circuit", "x"},
                     {"hop", 0}, {"relay_cmd", 33},
                     {"data_hex", "0500000000000000"}}})},
      {"expect",
       json::array({{{"kind", "report_count"}, {"count", 0}},
                    {{"kind", "feature_cells_min"}, {"circuit", "x"},
                     {"relay_cmd", 33}, {"min", 1}},
                    {{"kind", "circuit_state"}, {"circuit", "x"}, {"state", "open"}}})},
  };
  SimResult r = run_sim(cfg);
  for (const auto& f : r.failures) UNSCOPED_INFO(f);
  CHECK(r.ok());
}
