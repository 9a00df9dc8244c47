#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "orgami/scenario.hpp"

using namespace orgami;
using namespace orgami::scen;

namespace {

// tests run from build/tests; the fixtures live in the source tree
std::string fixture(const std::string& name) {
  for (const char* prefix : {"scenarios/", "../scenarios/", "../../scenarios/", "../../../scenarios/"}) {
    const std::string p = prefix + name;
    if (std::filesystem::exists(p)) return p;
  }
  throw IoError("fixture not found: " + name);
}

std::map<std::string, std::string> bundle_files(const TraceBundle& b) {
  std::map<std::string, std::string> files;
  files["metadata.json"] = b.metadata.dump(2);
  files["report.json"] = b.report.dump(2);
  files["events.csv"] = b.events_csv;
  files["messages.csv"] = b.messages_csv;
  std::string flows;
  for (const auto& l : b.flow_lines) flows += l.dump() + "\n";
  files["flows.jsonl"] = flows;
  for (const auto& [k, v] : b.extra_files) files[k] = v;
  return files;
}

}  // namespace

TEST_CASE("fig4.json loads with its cells, rules and drivers") {
  const auto sc = load_scenario(fixture("fig4.json"));
  CHECK(sc.name == "fig4");
  CHECK(sc.cells.cells.size() == 2);
  CHECK(sc.cells.rule_count() == 3);
  CHECK(sc.drivers.size() == 5);
  CHECK(sc.sensor_bindings.size() == 1);
  CHECK(sc.experiment_type == "flow");
}

TEST_CASE("unknown fields are reported by name, all at once") {
  json j = json::parse(R"({
    "name": "bad",
    "cells": [{"id": "n0", "frobnicate": 3,
               "resources": [{"kind": "L", "name": "x", "value": 1, "bogus": true}]}],
    "experiment": {"type": "flow"},
    "mystery": 1
  })");
  try {
    parse_scenario(j);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("mystery") != std::string::npos);
    CHECK(what.find("frobnicate") != std::string::npos);
    CHECK(what.find("bogus") != std::string::npos);
    CHECK(e.issues.size() == 3);
  }
}

TEST_CASE("schema rejection is total: bad rules, addresses and references") {
  json j = json::parse(R"({
    "name": "bad2",
    "cells": [{"id": "n0", "resources": [
      {"kind": "A", "name": "t", "rule": "IF THEN nothing"},
      {"kind": "Q", "name": "x", "value": 1},
      {"kind": "L", "name": "y", "value": 2, "direction": "in"}
    ]}],
    "drivers": [{"at": 1, "address": "ghost/L/x", "value": 1}],
    "experiment": {"type": "flow"}
  })");
  try {
    parse_scenario(j);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.issues.size() >= 4);  // rule syntax, bad kind, misplaced direction, unknown cell
  }
}

TEST_CASE("an empty file is a parse error") {
  const auto path = std::filesystem::temp_directory_path() / "orgami_empty.json";
  std::ofstream(path).close();
  CHECK_THROWS_AS(load_scenario(path.string()), ParseError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/nowhere.json"), IoError);
}

TEST_CASE("fig4 run: p1 trace equals the consecutive differences, agents die at 50") {
  const auto sc = load_scenario(fixture("fig4.json"));
  const auto bundle = run_scenario(sc);
  CHECK(bundle.verdict == 0);
  // event log carries the three difference writes
  CHECK(bundle.events_csv.find(",n1,L,p1,update,7,") != std::string::npos);
  CHECK(bundle.events_csv.find(",n1,L,p1,update,43,") != std::string::npos);
  CHECK(bundle.events_csv.find(",n1,L,p1,update,50,") != std::string::npos);
  // after the teardown the final state holds no agents
  const auto& final_state = bundle.report.at("final_state");
  for (const auto& [cell, resources] : final_state.items())
    for (const auto& [addr, value] : resources.items()) CHECK(addr.find("/A/") == std::string::npos);
  // the post-teardown injection triggered nothing
  const auto& flows = bundle.report.at("flows");
  REQUIRE(flows.size() == 5);
  CHECK(flows[4].at("steps") == 0);
}

TEST_CASE("petri scenario reports termination and range") {
  const auto sc = load_scenario(fixture("petri_fig4.json"));
  const auto bundle = run_scenario(sc);
  CHECK(bundle.report.at("termination") == "terminates");
  CHECK(bundle.report.at("range").at("min").get<int>() >= -100);
  CHECK(bundle.extra_files.count("net.pnml") == 1);
  CHECK(bundle.extra_files.count("stategraph.dot") == 1);
  CHECK(bundle.extra_files.count("net.json") == 1);
}

TEST_CASE("deploy scenario: both strategies agree") {
  const auto sc = load_scenario(fixture("deploy_ring4.json"));
  const auto bundle = run_scenario(sc);
  CHECK(bundle.verdict == 0);
  CHECK(bundle.report.at("strategies_agree") == true);
  CHECK(bundle.extra_files.count("mapping.json") == 1);
  CHECK(bundle.extra_files.count("instance.opb") == 1);
  // pinning respected
  const auto mapping = json::parse(bundle.extra_files.at("mapping.json"));
  CHECK(mapping.at("assignment").at("c0/S/p0") == "n1");
  CHECK(mapping.at("assignment").at("c1/S/p1") == "n3");
}

TEST_CASE("vote scenario: library and compiled paths agree") {
  const auto sc = load_scenario(fixture("vote_10x10.json"));
  const auto bundle = run_scenario(sc);
  CHECK(bundle.verdict == 0);
  CHECK(bundle.report.at("outcome").at("resolved") == true);
  CHECK(bundle.report.at("outcome").at("winner") == 2);
  CHECK(bundle.report.at("compiled").at("agrees_with_library") == true);
  CHECK(bundle.extra_files.count("outcome.json") == 1);
}

TEST_CASE("anc scenario: three behaviors, perfect second pass") {
  const auto sc = load_scenario(fixture("anc_fig8.json"));
  const auto bundle = run_scenario(sc);
  CHECK(bundle.report.at("behaviors") == 3);
  const auto& pres = bundle.report.at("presentations");
  REQUIRE(pres.size() == 6);
  for (std::size_t i = 3; i < 6; ++i) {
    CHECK(pres[i].at("selection_accuracy") == 1.0);
    CHECK(pres[i].at("max_selected_error").get<double>() < 0.005);
  }
  CHECK(bundle.extra_files.count("learning_curve.csv") == 1);
  // the trained behaviors were written back as resources on the hosting cell
  CHECK(bundle.events_csv.find("anc_behavior_1") != std::string::npos);
}

TEST_CASE("byte-identical bundles for identical seeds, and a changed seed changes them") {
  for (const char* name : {"fig4.json", "vote_10x10.json"}) {
    CAPTURE(name);
    const auto sc = load_scenario(fixture(name));
    const auto a = bundle_files(run_scenario(sc));
    const auto b = bundle_files(run_scenario(sc));
    CHECK(a == b);
  }
  auto sc = load_scenario(fixture("vote_10x10.json"));
  const auto a = bundle_files(run_scenario(sc));
  sc.seed += 1;  // different topology draw
  const auto c = bundle_files(run_scenario(sc));
  CHECK(a != c);
}

TEST_CASE("export writes stable names and re-export is idempotent") {
  const auto sc = load_scenario(fixture("fig4.json"));
  const auto bundle = run_scenario(sc);
  const auto dir = std::filesystem::temp_directory_path() / "orgami_export_test";
  std::filesystem::remove_all(dir);
  export_bundle(bundle, dir.string());
  for (const char* f : {"metadata.json", "report.json", "events.csv", "messages.csv", "flows.jsonl"})
    CHECK(std::filesystem::exists(dir / f));
  const auto size1 = std::filesystem::file_size(dir / "events.csv");
  export_bundle(bundle, dir.string());
  CHECK(std::filesystem::file_size(dir / "events.csv") == size1);
  std::filesystem::remove_all(dir);
}
