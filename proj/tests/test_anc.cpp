#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "anc_harness.hpp"
#include "apriori_harness.hpp"
#include "orgami/anc.hpp"

using namespace orgami;
using namespace orgami::anc;

namespace {

Dataset constant_dataset(const Vec& c, std::size_t n) {
  Dataset d{c.size(), c.size(), {}, {}};
  Rng rng(5);
  for (std::size_t i = 0; i < n; ++i) {
    Vec ctx(c.size());
    for (auto& x : ctx) x = rng.uniform_real(-1, 1);
    d.push(ctx, c);
  }
  return d;
}

double reldiff(double a, double b) { return std::abs(a - b) / std::max(1e-4, std::abs(a) + std::abs(b)); }

}  // namespace

TEST_CASE("zero-weight network predicts the zero vector") {
  const Mlp net(3, 8, 2);
  const Vec y = net.forward({0.3, -0.7, 2.0});
  CHECK(y == Vec{0.0, 0.0});
  CHECK_THROWS_AS(net.forward({1.0}), WidthMismatch);
}

TEST_CASE("training a constant-signal behavior reproduces the constant") {
  const Dataset data = constant_dataset({0.4, -0.2}, 50);
  const auto tr = train_behavior(data, Hyper{16, 0.2, 800, 3, 0.5});
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vec y = tr.net.forward(data.inputs[i]);
    CHECK(std::abs(y[0] - 0.4) < 0.05);
    CHECK(std::abs(y[1] + 0.2) < 0.05);
  }
}

TEST_CASE("XOR-style dataset trains below 0.05 MSE") {
  Dataset d{2, 1, {}, {}};
  d.push({0, 0}, {0});
  d.push({0, 1}, {1});
  d.push({1, 0}, {1});
  d.push({1, 1}, {0});
  const auto tr = train_behavior(d, Hyper{16, 0.3, 4000, 11, 0.5});
  CHECK(tr.net.loss(d) < 0.05);
  // an over-large step diverges and is reported rather than returning NaNs
  CHECK_THROWS_AS(train_behavior(d, Hyper{16, 1.0, 4000, 11, 0.5}), InvalidParams);
}

TEST_CASE("a single-sample dataset is memorized and flagged degenerate") {
  Dataset d{2, 2, {}, {}};
  d.push({0.5, -0.5}, {0.1, 0.9});
  const auto tr = train_behavior(d, Hyper{8, 0.5, 4000, 1, 0.5});
  CHECK(tr.degenerate);
  CHECK(tr.net.loss(d) < 1e-6);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Dataset data = constant_dataset({0.1, 0.2}, 20);
  const Hyper hyper{8, 0.1, 200, 77, 0.5};
  const auto a = train_behavior(data, hyper);
  const auto b = train_behavior(data, hyper);
  CHECK(a.net.w1() == b.net.w1());
  CHECK(a.net.w2() == b.net.w2());
  CHECK(a.net.b1() == b.net.b1());
  CHECK(a.net.b2() == b.net.b2());
  CHECK(a.epoch_losses == b.epoch_losses);
}

TEST_CASE("backprop matches central finite differences") {
  Rng rng(31337);
  for (int trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    const std::size_t in = 1 + rng.index(3), hidden = 2 + rng.index(4), out = 1 + rng.index(2);
    Rng init(rng.next_u64());
    Mlp net = Mlp::random(in, hidden, out, init, 0.8);
    Dataset d{in, out, {}, {}};
    const std::size_t n = 1 + rng.index(5);
    for (std::size_t s = 0; s < n; ++s) {
      Vec x(in), y(out);
      for (auto& v : x) v = rng.uniform_real(-1, 1);
      for (auto& v : y) v = rng.uniform_real(-1, 1);
      d.push(x, y);
    }
    const auto grads = net.gradients(d);
    const double h = 1e-5;
    double worst = 0;
    for (std::size_t p = 0; p < net.param_count(); ++p) {
      const double orig = net.get_param(p);
      net.set_param(p, orig + h);
      const double lp = net.loss(d);
      net.set_param(p, orig - h);
      const double lm = net.loss(d);
      net.set_param(p, orig);
      const double numeric = (lp - lm) / (2 * h);
      worst = std::max(worst, reldiff(net.grad_param(grads, p), numeric));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("full-batch descent with a small learning rate never increases the loss") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Dataset d{2, 2, {}, {}};
    for (int s = 0; s < 12; ++s)
      d.push({rng.uniform_real(-1, 1), rng.uniform_real(-1, 1)},
             {rng.uniform_real(-1, 1), rng.uniform_real(-1, 1)});
    const auto tr = train_behavior(d, Hyper{8, 0.05, 500, 42 + static_cast<std::uint64_t>(trial), 0.5});
    for (std::size_t e = 1; e < tr.epoch_losses.size(); ++e)
      CHECK(tr.epoch_losses[e] <= tr.epoch_losses[e - 1] + 1e-9);
  }
}

TEST_CASE("selection: empty library learns, low error selects, ties go to the oldest") {
  std::vector<Behavior> lib;
  CHECK(select_behavior(lib, 0.1).learn_new);

  Behavior b1;
  b1.id = 1;
  b1.inserted_at = 1;
  b1.smoothed_error = 0.5;
  b1.error_known = true;
  lib.push_back(b1);
  CHECK(select_behavior(lib, 0.1).learn_new);  // too wrong to trust

  Behavior b2;
  b2.id = 2;
  b2.inserted_at = 2;
  b2.smoothed_error = 0.01;
  b2.error_known = true;
  lib.push_back(b2);
  const auto sel = select_behavior(lib, 0.1);
  REQUIRE_FALSE(sel.learn_new);
  CHECK(sel.behavior == 2);

  lib[0].smoothed_error = 0.01;  // exact tie: earlier insertion wins
  const auto tie = select_behavior(lib, 0.1);
  REQUIRE_FALSE(tie.learn_new);
  CHECK(tie.behavior == 1);
}

TEST_CASE("selection argmin is invariant under positive scaling of the errors") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Behavior> lib;
    const std::size_t n = 2 + rng.index(4);
    for (std::size_t i = 0; i < n; ++i) {
      Behavior b;
      b.id = i + 1;
      b.inserted_at = i;
      b.error_known = true;
      b.smoothed_error = rng.uniform_real(1e-4, 1.0);
      lib.push_back(b);
    }
    const double theta = 2.0;  // everything selectable
    const auto before = select_behavior(lib, theta);
    const double scale = rng.uniform_real(0.1, 10.0);
    for (auto& b : lib) b.smoothed_error *= scale;
    const auto after = select_behavior(lib, theta * scale);
    CHECK(before.behavior == after.behavior);
  }
}

TEST_CASE("library view is ordered by ascending smoothed error") {
  std::vector<Behavior> lib(3);
  lib[0] = {1, Mlp(1, 1, 1), 0.7, true, 0, "", {}, {}};
  lib[1] = {2, Mlp(1, 1, 1), 0.1, true, 1, "", {}, {}};
  lib[2] = {3, Mlp(1, 1, 1), 0.0, false, 2, "", {}, {}};  // unknown error sorts last
  const auto view = ordered_library(lib);
  CHECK(view[0]->id == 2);
  CHECK(view[1]->id == 1);
  CHECK(view[2]->id == 3);
}

TEST_CASE("fresh controller collects; a filled buffer trains one behavior") {
  auto cfg = ancfix::fig8_config();
  cfg.buffer_target = 10;
  cfg.hyper.epochs = 300;
  Controller ctl(cfg);
  const auto sig = ancfix::circle_signal(1.0, 8, +1);
  for (int s = 0; s < 9; ++s) {
    const auto res = ctl.step(sig[s % 8], sig[(s + 1) % 8]);
    CHECK_FALSE(res.action.has_value());
    CHECK(ctl.collecting());
  }
  CHECK(ctl.library().empty());
  const auto res = ctl.step(sig[9 % 8], sig[10 % 8]);
  CHECK(res.trained);
  CHECK(ctl.library().size() == 1);
  CHECK(ctl.buffer_size() == 0);
}

TEST_CASE("fig8 property: three signals, two passes, exact selection") {
  Controller ctl(ancfix::fig8_config());
  const auto res = ancfix::run_fig8(ctl, ancfix::three_signals());
  CHECK(res.behaviors == 3);
  CHECK(res.pass2_selected > 0);
  CHECK(res.pass2_correct == res.pass2_selected);
  CHECK(res.pass2_worst_error < ancfix::fig8_config().theta_select);
}

TEST_CASE("human corrections accumulate and optionally retrain the behavior") {
  auto cfg = ancfix::fig8_config();
  cfg.buffer_target = 10;
  cfg.hyper.epochs = 400;
  cfg.refinement_trigger = 5;
  Controller ctl(cfg);
  const auto sig = ancfix::circle_signal(1.0, 8, +1);
  // learn the base behavior
  for (int s = 0; s < 12; ++s) ctl.step(sig[s % 8], sig[(s + 1) % 8]);
  REQUIRE(ctl.library().size() == 1);
  const std::string fp = ctl.library()[0].dataset_fingerprint;
  // the human nudges the actuator: actual != predicted on every step
  bool refined = false;
  for (int s = 0; s < 40 && !refined; ++s) {
    Vec actual = sig[(s + 1) % 8];
    actual[0] += 0.01;
    const auto res = ctl.step(sig[s % 8], actual);
    refined = res.refined;
  }
  CHECK(refined);
  CHECK(ctl.library()[0].dataset_fingerprint != fp);  // retrained on mixed data
}

TEST_CASE("decision-tree dataset generation") {
  // single leaf: every label is the constant
  const auto leaf = DecisionTree::leaf({1.0});
  const auto d1 = generate_dataset_from_dt(leaf, {{0.0, 1.0}}, 100, 9);
  for (const auto& t : d1.targets) CHECK(t == Vec{1.0});

  // two leaves split at x > 0.5: label proportions track the region measures
  DecisionTree split;
  split.nodes.push_back({false, 0, 0.5, 1, 2, {}});
  split.nodes.push_back({true, -1, 0, -1, -1, {0.0}});
  split.nodes.push_back({true, -1, 0, -1, -1, {1.0}});
  const auto d2 = generate_dataset_from_dt(split, {{0.0, 1.0}}, 1000, 12);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < d2.size(); ++i) {
    CHECK(d2.targets[i][0] == (d2.inputs[i][0] > 0.5 ? 1.0 : 0.0));
    if (d2.targets[i][0] == 1.0) ++ones;
  }
  CHECK(std::abs(static_cast<double>(ones) / 1000.0 - 0.5) < 0.05);

  // same seed, same dataset
  const auto d3 = generate_dataset_from_dt(split, {{0.0, 1.0}}, 1000, 12);
  CHECK(d2.inputs == d3.inputs);
  CHECK(d2.targets == d3.targets);

  DecisionTree broken;
  broken.nodes.push_back({false, 0, 0.5, -1, 1, {}});
  broken.nodes.push_back({true, -1, 0, -1, -1, {1.0}});
  CHECK_THROWS_AS(generate_dataset_from_dt(broken, {{0.0, 1.0}}, 10, 1), IncompleteTree);
}

TEST_CASE("discretization feeds apriori with per-dimension bin items") {
  Dataset d{1, 1, {}, {}};
  for (int i = 0; i < 16; ++i) {
    const double x = i / 15.0;
    d.push({x}, {x > 0.5 ? 1.0 : 0.0});
  }
  const auto [txns, disc] = discretize(d, 4);
  CHECK(txns.size() == 16);
  for (const auto& t : txns) CHECK(t.size() == 2);  // one item per column
  CHECK(disc.item_names.size() == 8);
  const auto rules = extract_rules_apriori(txns, 0.2, 0.8);
  CHECK_FALSE(rules.empty());  // high x-bins imply the high y-bin
}

TEST_CASE("apriori on the four-transaction example") {
  // {A,B}, {A,B}, {A}, {B} with A=0, B=1
  const std::vector<Transaction> txns{{0, 1}, {0, 1}, {0}, {1}};
  const auto frequent = apriori(txns, 0.5);
  REQUIRE(frequent.size() == 3);
  std::map<Itemset, double> sup;
  for (const auto& f : frequent) sup[f.items] = f.support;
  CHECK(sup.at({0}) == 0.75);
  CHECK(sup.at({1}) == 0.75);
  CHECK(sup.at({0, 1}) == 0.5);

  const auto rules = extract_rules_apriori(txns, 0.5, 0.1);
  bool found = false;
  for (const auto& r : rules)
    if (r.antecedent == Itemset{0} && r.consequent == Itemset{1}) {
      found = true;
      CHECK(r.confidence == Catch::Approx(2.0 / 3.0));
      CHECK(r.support == 0.5);
    }
  CHECK(found);
}

TEST_CASE("min_support 1.0 keeps only universally present items") {
  const std::vector<Transaction> txns{{0, 1, 2}, {0, 2}, {0, 2, 3}};
  const auto frequent = apriori(txns, 1.0);
  std::set<Itemset> got;
  for (const auto& f : frequent) got.insert(f.items);
  CHECK(got == std::set<Itemset>{{0}, {2}, {0, 2}});
}

TEST_CASE("apriori equals brute-force enumeration on random datasets") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CAPTURE(seed);
    const auto txns = apriorifix::random_transactions(seed);
    for (double min_sup : {0.2, 0.4}) {
      const auto fast = apriori(txns, min_sup);
      const auto slow = apriorifix::brute_force_frequent(txns, min_sup);
      CHECK(apriorifix::same_itemsets(fast, slow));
    }
  }
}

TEST_CASE("anti-monotonicity: every subset of a frequent itemset is frequent") {
  for (std::uint64_t seed = 20; seed <= 25; ++seed) {
    CAPTURE(seed);
    const auto txns = apriorifix::random_transactions(seed);
    const auto frequent = apriori(txns, 0.25);
    std::set<Itemset> reported;
    for (const auto& f : frequent) reported.insert(f.items);
    for (const auto& f : frequent) {
      if (f.items.size() < 2) continue;
      for (std::size_t drop = 0; drop < f.items.size(); ++drop) {
        Itemset sub;
        for (std::size_t i = 0; i < f.items.size(); ++i)
          if (i != drop) sub.push_back(f.items[i]);
        CHECK(reported.count(sub) == 1);
      }
    }
  }
}

TEST_CASE("rules are sorted by support desc, confidence desc, lexicographic") {
  const auto txns = apriorifix::random_transactions(77);
  const auto rules = extract_rules_apriori(txns, 0.2, 0.3);
  for (std::size_t i = 1; i < rules.size(); ++i) {
    const auto& a = rules[i - 1];
    const auto& b = rules[i];
    const bool ordered =
        a.support > b.support ||
        (a.support == b.support &&
         (a.confidence > b.confidence ||
          (a.confidence == b.confidence &&
           (a.antecedent < b.antecedent ||
            (a.antecedent == b.antecedent && a.consequent <= b.consequent)))));
    CHECK(ordered);
  }
  if (!rules.empty()) {
    const auto text = rule_text(rules.front());
    CHECK(text.find("=>") != std::string::npos);
  }
}
