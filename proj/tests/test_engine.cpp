#include <catch2/catch_amalgamated.hpp>

#include "orgami/engine.hpp"
#include "orgami/rng.hpp"

using namespace orgami;

namespace {

ResourceAddress addr(const std::string& s) { return ResourceAddress::parse(s); }

Topology two_cells() {
  return topo::from_edges({"n0", "n1"}, {{"n0", "n1"}});
}

/// The running example: t0 on the sensor cell forwards consecutive
/// differences of p0 to n1, t1 publishes them to p1, and t2 tears the whole
/// choreography down once p1 reaches 50.
System make_fig4_system(SimTime link_delay = 1) {
  System sys(two_cells(), LinkModel::fixed(link_delay), 42);
  sys.add_cell("n0");
  sys.add_cell("n1");
  sys.install_resource(addr("n0/A/t0"),
                       Value::text("IF exists(prev(L/p0)) THEN UPDATE n1/L/diff = prev(L/p0) - L/p0"));
  sys.install_resource(addr("n1/L/diff"), Value::integer(0));
  sys.install_resource(addr("n1/L/p1"), Value::integer(0));
  sys.install_resource(addr("n1/A/t1"), Value::text("IF exists(L/diff) THEN UPDATE self/L/p1 = L/diff"));
  sys.install_resource(addr("n1/A/t2"),
                       Value::text("IF L/p1 == 50 THEN DELETE n0/A/t0; DELETE self/A/t1; DELETE self/A/t2"));
  return sys;
}

std::vector<Value> p1_writes(const System& sys) {
  std::vector<Value> out;
  for (const auto& ev : sys.event_log())
    if (ev.address == addr("n1/L/p1") && ev.op == Op::update) out.push_back(*ev.value);
  return out;
}

}  // namespace

TEST_CASE("evaluate_pre on plain comparisons") {
  Cell cell("n0");
  cell.apply(Op::create, addr("n0/L/x"), Value::integer(5));
  const auto snap = cell.snapshot();

  AgentRule gt = parse_rule("IF L/x > 3 THEN UPDATE self/L/y = 1");
  gt.host_cell = "n0";
  CHECK(System::evaluate_pre(gt, snap));

  AgentRule never = parse_rule("IF false THEN UPDATE self/L/y = 1");
  never.host_cell = "n0";
  CHECK_FALSE(System::evaluate_pre(never, snap));

  AgentRule missing = parse_rule("IF L/nope > 0 THEN UPDATE self/L/y = 1");
  missing.host_cell = "n0";
  CHECK_THROWS_AS(System::evaluate_pre(missing, snap), UnresolvedReference);

  AgentRule numeric_pre = parse_rule("IF L/x THEN UPDATE self/L/y = 1");
  numeric_pre.host_cell = "n0";
  CHECK_THROWS_AS(System::evaluate_pre(numeric_pre, snap), TypeError);
}

TEST_CASE("fire_agent computes the difference payload") {
  Cell cell("n0");
  cell.apply(Op::create, addr("n0/L/p0"), Value::integer(50));
  const auto snap = cell.snapshot();
  std::map<ResourceAddress, std::optional<Value>> prev;
  prev[addr("n0/L/p0")] = Value::integer(100);

  AgentRule rule = parse_rule("IF prev(L/p0) != L/p0 THEN UPDATE n1/L/p1 = prev(L/p0) - L/p0");
  rule.host_cell = "n0";
  rule.id = "n0/A/t0";
  REQUIRE(System::evaluate_pre(rule, snap, &prev));
  std::vector<std::string> errors;
  const auto out = System::fire_agent(rule, snap, {}, &prev, errors);
  REQUIRE(out.size() == 1);
  CHECK(out[0].op == Op::update);
  CHECK(out[0].target == addr("n1/L/p1"));
  CHECK(out[0].value == Value::integer(50));
  CHECK(errors.empty());
}

TEST_CASE("fire_agent: nested rule payloads and per-action error isolation") {
  Cell cell("n0");
  cell.apply(Op::create, addr("n0/L/x"), Value::integer(1));
  const auto snap = cell.snapshot();

  AgentRule matroska = parse_rule(
      "IF true THEN CREATE self/A/child = \"IF true THEN UPDATE self/L/done = true\"");
  matroska.host_cell = "n0";
  std::vector<std::string> errors;
  auto out = System::fire_agent(matroska, snap, {}, nullptr, errors);
  REQUIRE(out.size() == 1);
  CHECK(out[0].target.kind == Kind::A);
  CHECK_NOTHROW(parse_rule(out[0].value->as_text()));

  AgentRule faulty = parse_rule(
      "IF true THEN UPDATE self/L/a = L/x / 0; UPDATE self/L/b = L/x + 1");
  faulty.host_cell = "n0";
  errors.clear();
  out = System::fire_agent(faulty, snap, {}, nullptr, errors);
  REQUIRE(out.size() == 1);  // failing action skipped, the other one emitted
  CHECK(out[0].target == addr("n0/L/b"));
  CHECK(out[0].value == Value::integer(2));
  REQUIRE(errors.size() == 1);
  CHECK(errors[0].find("division by zero") != std::string::npos);
}

TEST_CASE("fig4: consecutive differences, self-termination, quiescence") {
  System sys = make_fig4_system();
  sys.inject(addr("n0/L/p0"), Value::integer(100), 10);
  sys.inject(addr("n0/L/p0"), Value::integer(93), 20);
  sys.inject(addr("n0/L/p0"), Value::integer(50), 30);
  sys.inject(addr("n0/L/p0"), Value::integer(0), 40);
  sys.run();

  CHECK(p1_writes(sys) == std::vector<Value>{Value::integer(7), Value::integer(43), Value::integer(50)});
  CHECK_FALSE(sys.cell("n0").has(addr("n0/A/t0")));
  CHECK_FALSE(sys.cell("n1").has(addr("n1/A/t1")));
  CHECK_FALSE(sys.cell("n1").has(addr("n1/A/t2")));
  CHECK(sys.rules().empty());

  // Injecting further p0 values produces zero interactions.
  const auto& trace = sys.run_flow(addr("n0/L/p0"), Value::integer(99), 16);
  CHECK(trace.steps.empty());
  CHECK(trace.terminated);
}

TEST_CASE("fig4 functional property: p1 sequence equals consecutive differences") {
  Rng rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    System sys = make_fig4_system();
    std::vector<std::int64_t> values;
    const int k = 3 + static_cast<int>(rng.uniform_int(0, 5));
    for (int i = 0; i < k; ++i) values.push_back(rng.uniform_int(0, 20));  // diffs stay far from 50
    SimTime at = 10;
    for (auto v : values) {
      sys.inject(addr("n0/L/p0"), Value::integer(v), at);
      at += 10;
    }
    sys.run();
    std::vector<Value> expected;
    for (std::size_t i = 1; i < values.size(); ++i)
      expected.push_back(Value::integer(values[i - 1] - values[i]));
    CHECK(p1_writes(sys) == expected);
  }
}

TEST_CASE("determinism: identical scenario and seed give identical logs") {
  const auto run = [] {
    System sys = make_fig4_system();
    sys.inject(addr("n0/L/p0"), Value::integer(100), 10);
    sys.inject(addr("n0/L/p0"), Value::integer(93), 20);
    sys.run();
    return std::pair{event_log_csv(sys.event_log()), sys.sim().message_log_csv()};
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("mutual re-triggering exhausts the ttl") {
  System sys(two_cells(), LinkModel::fixed(0), 1);
  sys.add_cell("n0");
  sys.add_cell("n1");
  sys.install_resource(addr("n0/L/a"), Value::integer(0));
  sys.install_resource(addr("n1/L/b"), Value::integer(0));
  sys.install_resource(addr("n0/A/ra"), Value::text("IF exists(L/a) THEN UPDATE n1/L/b = L/a + 1"));
  sys.install_resource(addr("n1/A/rb"), Value::text("IF exists(L/b) THEN UPDATE n0/L/a = L/b + 1"));

  const auto& trace = sys.run_flow(addr("n0/L/a"), Value::integer(1), 10);
  CHECK(trace.ttl_exhausted);
  CHECK_FALSE(trace.terminated);
  CHECK(trace.done);
  // Flow-length bound: at most ttl rounds x live rules.
  CHECK(trace.steps.size() <= 10 * 2);
}

TEST_CASE("PRE false means zero interactions from that rule") {
  System sys(two_cells(), LinkModel::fixed(1), 1);
  sys.add_cell("n0");
  sys.add_cell("n1");
  sys.install_resource(addr("n0/L/x"), Value::integer(0));
  sys.install_resource(addr("n0/A/r"), Value::text("IF L/x > 100 THEN UPDATE self/L/y = 1"));
  const auto& trace = sys.run_flow(addr("n0/L/x"), Value::integer(5), 8);
  CHECK(trace.steps.empty());
  CHECK(trace.terminated);
}

TEST_CASE("a deleted rule emits nothing in later rounds") {
  // killer deletes worker in the round they are both woken; the worker still
  // finishes that round, then never fires again.
  System sys(two_cells(), LinkModel::fixed(1), 1);
  sys.add_cell("n0");
  sys.add_cell("n1");
  sys.install_resource(addr("n0/L/x"), Value::integer(0));
  sys.install_resource(addr("n0/L/count"), Value::integer(0));
  sys.install_resource(addr("n0/A/killer"), Value::text("IF exists(L/x) THEN DELETE self/A/worker"));
  sys.install_resource(addr("n0/A/worker"),
                       Value::text("IF exists(L/x) THEN UPDATE self/L/count = L/count + 1; "
                                   "UPDATE self/L/x = L/x + 1"));
  const auto& trace = sys.run_flow(addr("n0/L/x"), Value::integer(1), 32);
  CHECK(trace.terminated);
  CHECK(sys.cell("n0").read(addr("n0/L/count")) == Value::integer(1));
  int worker_steps = 0;
  for (const auto& st : trace.steps)
    if (st.rule == "n0/A/worker") ++worker_steps;
  CHECK(worker_steps == 1);
}

TEST_CASE("agents creating agents: the created rule wakes on its own creation") {
  System sys(two_cells(), LinkModel::fixed(1), 1);
  sys.add_cell("n0");
  sys.add_cell("n1");
  sys.install_resource(addr("n0/L/go"), Value::integer(0));
  sys.install_resource(
      addr("n0/A/spawner"),
      Value::text("IF exists(L/go) THEN CREATE n1/A/child = \"IF true THEN CREATE self/L/done = "
                  "true; DELETE self/A/child\""));
  const auto& trace = sys.run_flow(addr("n0/L/go"), Value::integer(1), 16);
  CHECK(trace.terminated);
  CHECK(sys.cell("n1").has(addr("n1/L/done")));
  CHECK_FALSE(sys.cell("n1").has(addr("n1/A/child")));  // deleted itself
}

TEST_CASE("POST reads of the target cell use the cached snapshot") {
  System sys(two_cells(), LinkModel::fixed(1), 1);
  sys.add_cell("n0");
  sys.add_cell("n1");
  sys.install_resource(addr("n0/L/ping"), Value::integer(0));
  sys.install_resource(addr("n1/L/v"), Value::integer(5));
  sys.install_resource(addr("n1/L/echo"), Value::integer(0));
  sys.install_resource(addr("n0/A/reader"),
                       Value::text("IF exists(L/ping) THEN UPDATE n1/L/echo = n1/L/v + 1"));
  sys.install_resource(addr("n1/A/pinger"),
                       Value::text("IF exists(L/v) THEN UPDATE n0/L/ping = 1"));

  // Before any message from n1 arrived at n0 there is no cached X_m: the
  // action fails and is recorded, nothing is emitted.
  const auto& t1 = sys.run_flow(addr("n0/L/ping"), Value::integer(1), 8);
  REQUIRE(t1.steps.size() == 1);
  CHECK_FALSE(t1.steps[0].errors.empty());
  CHECK(sys.cell("n1").read(addr("n1/L/echo")) == Value::integer(0));

  // A message from n1 refreshes n0's cache of X_{n1}; the read then works.
  sys.run_flow(addr("n1/L/v"), Value::integer(5), 8);
  sys.run();
  CHECK(sys.cell("n1").read(addr("n1/L/echo")) == Value::integer(6));
}

TEST_CASE("run_flow rejects a non-positive ttl") {
  System sys = make_fig4_system();
  CHECK_THROWS_AS(sys.run_flow(addr("n0/L/p0"), Value::integer(1), 0), InvalidParams);
}
