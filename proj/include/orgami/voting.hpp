#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "orgami/engine.hpp"
#include "orgami/netsim.hpp"

namespace orgami::vp {

// ---------------------------------------------------------------------------
// Distributed voting: Network Average Consensus over decision-maker utility
// vectors, an accuracy-gated decision step, and refinement rounds over the
// ambiguous candidate set. The library path runs synchronous rounds; the
// compiled service-choreography path (compile_vp_to_sc) runs asynchronously
// on the middleware and is checked by equivalence of outcomes.
// ---------------------------------------------------------------------------

using Profile = std::vector<std::vector<double>>;  // [decision maker][candidate]

inline void validate_profile(const Profile& profile) {
  if (profile.empty()) throw InvalidParams("empty preference profile");
  const std::size_t k = profile.front().size();
  if (k < 1) throw InvalidParams("profile needs at least one candidate");
  for (const auto& u : profile) {
    if (u.size() != k) throw InvalidParams("ragged preference profile");
    for (double v : u)
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw InvalidParams("utilities must be finite values in [0,1]");
  }
}

/// Safe step size for any supplied topology: 1/(deg_max + 1) < 1/deg_max.
inline double default_epsilon(const Topology& t) {
  return 1.0 / (static_cast<double>(t.max_degree()) + 1.0);
}

struct ConsensusState {
  std::vector<std::vector<double>> x;  // [node][candidate]
  std::uint64_t iteration = 0;
};

/// One synchronous step: x_i += eps * sum_{j in N(i)} (x_j - x_i), all nodes
/// simultaneously. A dropped edge removes the exchanged term from BOTH
/// endpoints, which is what keeps the per-candidate sum conserved under
/// packet loss.
inline void nac_step(ConsensusState& state, const Topology& topology, double eps,
                     const std::set<std::pair<int, int>>* dropped_edges = nullptr,
                     const std::set<std::pair<int, int>>* dropped_directed = nullptr) {
  const int deg_max = topology.max_degree();
  if (!(eps > 0.0) || (deg_max > 0 && !(eps < 1.0 / static_cast<double>(deg_max))))
    throw StepTooLarge("need 0 < eps < 1/deg_max");
  if (static_cast<int>(state.x.size()) != topology.size())
    throw InvalidParams("consensus state does not match topology size");
  const std::size_t k = state.x.empty() ? 0 : state.x.front().size();
  std::vector<std::vector<double>> delta(state.x.size(), std::vector<double>(k, 0.0));
  for (auto [u, v] : topology.edges) {
    const bool drop_uv = (dropped_edges && dropped_edges->count({u, v})) ||
                         (dropped_directed && dropped_directed->count({u, v}));
    const bool drop_vu = (dropped_edges && dropped_edges->count({u, v})) ||
                         (dropped_directed && dropped_directed->count({v, u}));
    for (std::size_t c = 0; c < k; ++c) {
      const double d = state.x[v][c] - state.x[u][c];
      if (!drop_uv) delta[u][c] += d;
      if (!drop_vu) delta[v][c] -= d;
    }
  }
  for (std::size_t i = 0; i < state.x.size(); ++i)
    for (std::size_t c = 0; c < k; ++c) state.x[i][c] += eps * delta[i][c];
  state.iteration += 1;
}

struct FaultConfig {
  double loss_prob = 0.0;
  std::uint64_t seed = 0;
  int switch_period = 0;             // iterations between topology switches; 0 = static
  std::vector<Topology> topologies;  // cycled when switch_period > 0
  bool asymmetric = false;           // drop directions independently (conservation off)
};

struct AggregationResult {
  std::vector<std::vector<double>> x;
  std::vector<double> mean;   // current per-candidate mean of the iterates
  std::uint64_t iterations = 0;
  bool converged = false;
  double residual = 0.0;  // max_i,c |x_ic - mean_c| at exit
};

namespace detail {

inline std::vector<double> column_mean(const std::vector<std::vector<double>>& x) {
  std::vector<double> mean(x.front().size(), 0.0);
  for (const auto& row : x)
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += row[c];
  for (auto& m : mean) m /= static_cast<double>(x.size());
  return mean;
}

inline double max_deviation(const std::vector<std::vector<double>>& x,
                            const std::vector<double>& mean) {
  double r = 0;
  for (const auto& row : x)
    for (std::size_t c = 0; c < mean.size(); ++c) r = std::max(r, std::abs(row[c] - mean[c]));
  return r;
}

}  // namespace detail

/// Iterates NAC until every node is within `tolerance` of the per-candidate
/// mean or `max_iters` is hit (result flagged, best iterate returned). Under
/// the symmetric-drop fault model the running mean equals the true initial
/// mean, so on a connected (union over time) graph the limit is the true
/// candidate average.
inline AggregationResult run_aggregation(const Profile& profile, const Topology& topology,
                                         double tolerance, std::uint64_t max_iters,
                                         double eps = 0.0, const FaultConfig* faults = nullptr) {
  validate_profile(profile);
  if (static_cast<int>(profile.size()) != topology.size())
    throw InvalidParams("one decision maker per topology node required");
  if (eps <= 0.0) {
    eps = default_epsilon(topology);
    if (faults)
      for (const auto& t : faults->topologies) eps = std::min(eps, default_epsilon(t));
  }

  ConsensusState state{profile, 0};
  Rng drop_rng(faults ? faults->seed : 0, "nac_drop");
  AggregationResult res;
  res.mean = detail::column_mean(state.x);

  for (std::uint64_t t = 0;; ++t) {
    res.mean = detail::column_mean(state.x);
    res.residual = detail::max_deviation(state.x, res.mean);
    if (res.residual < tolerance) {
      res.converged = true;
      break;
    }
    if (t >= max_iters) break;
    const Topology* topo = &topology;
    if (faults && faults->switch_period > 0 && !faults->topologies.empty())
      topo = &faults->topologies[(t / static_cast<std::uint64_t>(faults->switch_period)) %
                                 faults->topologies.size()];
    std::set<std::pair<int, int>> dropped;
    std::set<std::pair<int, int>> dropped_dir;
    if (faults && faults->loss_prob > 0.0) {
      for (auto e : topo->edges) {
        if (faults->asymmetric) {
          if (drop_rng.bernoulli(faults->loss_prob)) dropped_dir.insert({e.first, e.second});
          if (drop_rng.bernoulli(faults->loss_prob)) dropped_dir.insert({e.second, e.first});
        } else if (drop_rng.bernoulli(faults->loss_prob)) {
          dropped.insert(e);
        }
      }
    }
    nac_step(state, *topo, eps, &dropped, &dropped_dir);
    res.iterations = state.iteration;
  }
  res.x = std::move(state.x);
  return res;
}

// ---------------------------------------------------------------------------
// Decision step
// ---------------------------------------------------------------------------

struct Accuracy {
  bool decided = false;
  std::size_t winner = 0;
  std::vector<std::size_t> ambiguous;  // candidate indices within delta+residual of the top
};

/// Decided iff the top aggregated utility beats the runner-up by more than
/// delta plus the residual consensus disagreement. Exact ties are always
/// Ambiguous.
inline Accuracy check_accuracy(const std::vector<double>& aggregated, double delta,
                               double residual) {
  if (aggregated.empty()) throw InvalidParams("empty aggregation");
  Accuracy acc;
  std::size_t top = 0;
  for (std::size_t c = 1; c < aggregated.size(); ++c)
    if (aggregated[c] > aggregated[top]) top = c;
  if (aggregated.size() == 1) {
    acc.decided = true;
    acc.winner = 0;
    return acc;
  }
  double runner = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < aggregated.size(); ++c)
    if (c != top) runner = std::max(runner, aggregated[c]);
  if (aggregated[top] - runner > delta + residual) {
    acc.decided = true;
    acc.winner = top;
    return acc;
  }
  for (std::size_t c = 0; c < aggregated.size(); ++c)
    if (aggregated[top] - aggregated[c] <= delta + residual) acc.ambiguous.push_back(c);
  return acc;
}

/// Restriction to the ambiguous candidates with per-decision-maker min-max
/// renormalization to [0,1]; constant vectors map to all-0.5.
inline Profile refine(const Profile& profile, const std::vector<std::size_t>& ambiguous) {
  if (ambiguous.size() < 2) throw InvalidParams("refinement needs at least two candidates");
  Profile out;
  out.reserve(profile.size());
  for (const auto& u : profile) {
    std::vector<double> v;
    v.reserve(ambiguous.size());
    for (std::size_t c : ambiguous) v.push_back(u.at(c));
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*hi > *lo) {
      const double span = *hi - *lo;
      const double base = *lo;
      for (auto& val : v) val = (val - base) / span;
    } else {
      for (auto& val : v) val = 0.5;
    }
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// The full voting procedure
// ---------------------------------------------------------------------------

struct VoteParams {
  double eps = 0.0;  // 0 = 1/(deg_max+1)
  double tolerance = 1e-3;
  double delta = 0.01;
  std::uint64_t max_iters = 0;  // 0 = ceil(10 n^2 / eps)
  int max_rounds = 5;
};

struct VoteOutcome {
  bool resolved = false;
  std::size_t winner = 0;                       // original candidate index
  int rounds = 0;
  std::vector<std::uint64_t> iterations;        // per aggregation round
  std::vector<double> aggregated;               // first-round means over all candidates
  std::vector<std::vector<std::size_t>> ambiguity_trace;  // original indices per round
  std::vector<std::size_t> unresolved_set;      // ambiguous set when not resolved
  bool all_nodes_agree = false;
};

inline VoteOutcome vote(const Profile& profile, const Topology& topology, VoteParams params,
                        const FaultConfig* faults = nullptr) {
  validate_profile(profile);
  const std::size_t n = profile.size();
  double eps = params.eps;
  if (eps <= 0.0) {
    eps = default_epsilon(topology);
    if (faults)
      for (const auto& t : faults->topologies) eps = std::min(eps, default_epsilon(t));
  }
  const std::uint64_t max_iters =
      params.max_iters > 0
          ? params.max_iters
          : static_cast<std::uint64_t>(std::ceil(10.0 * static_cast<double>(n * n) / eps));

  VoteOutcome out;
  std::vector<std::size_t> candidates(profile.front().size());
  for (std::size_t c = 0; c < candidates.size(); ++c) candidates[c] = c;
  Profile cur = profile;

  for (int round = 0; round < params.max_rounds; ++round) {
    const AggregationResult agg =
        run_aggregation(cur, topology, params.tolerance, max_iters, eps, faults);
    out.rounds += 1;
    out.iterations.push_back(agg.iterations);
    if (round == 0) out.aggregated = agg.mean;

    const Accuracy acc = check_accuracy(agg.mean, params.delta, agg.residual);
    if (acc.decided) {
      out.resolved = true;
      out.winner = candidates[acc.winner];
      // Agreement: every node's own iterate must name the same winner.
      out.all_nodes_agree = true;
      for (const auto& row : agg.x) {
        std::size_t local_top = 0;
        for (std::size_t c = 1; c < row.size(); ++c)
          if (row[c] > row[local_top]) local_top = c;
        if (candidates[local_top] != out.winner) out.all_nodes_agree = false;
      }
      return out;
    }
    std::vector<std::size_t> global;
    for (std::size_t c : acc.ambiguous) global.push_back(candidates[c]);
    out.ambiguity_trace.push_back(global);
    if (acc.ambiguous.size() < 2) break;  // degenerate; cannot refine further
    cur = refine(cur, acc.ambiguous);
    candidates = std::move(global);
  }
  out.unresolved_set = candidates;
  return out;
}

// ---------------------------------------------------------------------------
// Compilation onto the middleware (Fig. 9 shape): per cell one NACx agent per
// candidate, one aggregation-control agent and one selection agent, n*(K+2)
// rules in total. Aggregation runs as an exact convergecast over a spanning
// tree of the deployment topology; the root's selection agent computes the
// winner flags and broadcasts them back down.
// ---------------------------------------------------------------------------

struct CompiledVp {
  Choreography choreography;
  std::vector<std::string> cells;         // topology order; cell i holds decision maker i
  std::string root;
  std::size_t candidates = 0;
  std::vector<ResourceAddress> start_addresses;  // inject true here to begin
};

namespace detail {

inline std::string zero_pad(std::size_t v, int width = 2) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace detail

inline CompiledVp compile_vp_to_sc(const Profile& profile, const Topology& topology) {
  validate_profile(profile);
  const std::size_t n = profile.size();
  if (static_cast<int>(n) != topology.size())
    throw InvalidParams("one decision maker per topology node required");
  const std::size_t k = profile.front().size();

  // Spanning tree: parent = smallest neighbor one hop closer to the root.
  const auto dist = topology.distances_from(0);
  const auto adj = topology.adjacency();
  std::vector<int> parent(n, -1);
  std::vector<std::vector<int>> children(n);
  for (int v = 1; v < static_cast<int>(n); ++v) {
    if (dist[v] < 0) throw InvalidParams("topology must be connected");
    for (int u : adj[v])
      if (dist[u] == dist[v] - 1) {
        parent[v] = u;
        break;
      }
    children[parent[v]].push_back(v);
  }

  CompiledVp out;
  out.cells = topology.nodes;
  out.root = topology.nodes[0];
  out.candidates = k;

  const auto cand = [&](std::size_t c) { return detail::zero_pad(c + 1); };

  for (std::size_t i = 0; i < n; ++i) {
    const std::string& me = topology.nodes[i];
    CellSpec cs;
    cs.id = me;
    for (std::size_t c = 0; c < k; ++c)
      cs.resources.push_back({Kind::L, "u_" + cand(c), Value::real(profile[i][c]), ""});
    cs.resources.push_back({Kind::L, "all_ready", Value::boolean(false), ""});
    cs.resources.push_back({Kind::L, "done", Value::boolean(false), ""});

    const bool is_root = i == 0;
    std::vector<std::string> kid_names;
    for (int ch : children[i]) kid_names.push_back(topology.nodes[ch]);

    // NACx agents: on all_ready, push this subtree's partial sums upward
    // (the root writes the grand totals instead).
    for (std::size_t c = 0; c < k; ++c) {
      std::string sum = "L/u_" + cand(c);
      for (const auto& kid : kid_names) sum += " + L/in_" + kid + "_" + cand(c);
      std::string src = "IF L/all_ready == true THEN ";
      if (is_root)
        src += "CREATE self/L/total_" + cand(c) + " = " + sum;
      else
        src += "CREATE " + topology.nodes[parent[i]] + "/L/in_" + me + "_" + cand(c) + " = " + sum;
      cs.resources.push_back({Kind::A, "nac_" + cand(c), Value::text(src), ""});
    }

    // Aggregation control: the accuracy gate of the convergecast — ready
    // once every child subtree has reported every candidate.
    std::string guard = "exists(L/start)";
    for (const auto& kid : kid_names)
      for (std::size_t c = 0; c < k; ++c)
        guard += " AND exists(L/in_" + kid + "_" + cand(c) + ")";
    cs.resources.push_back(
        {Kind::A, "vp_control", Value::text("IF " + guard + " THEN UPDATE self/L/all_ready = true"), ""});

    // Selection: the root computes argmax flags from the totals, everyone
    // forwards them to their children and marks completion.
    std::string sel;
    if (is_root) {
      std::string ready = "exists(L/total_" + cand(0) + ")";
      for (std::size_t c = 1; c < k; ++c) ready += " AND exists(L/total_" + cand(c) + ")";
      sel = "IF " + ready + " THEN ";
      for (std::size_t c = 0; c < k; ++c) {
        std::string expr;
        for (std::size_t j = 0; j < k; ++j) {
          if (j == c) continue;
          if (!expr.empty()) expr += " AND ";
          expr += "L/total_" + cand(c) + (j < c ? " > " : " >= ") + "L/total_" + cand(j);
        }
        if (expr.empty()) expr = "true";
        sel += "CREATE self/L/win_" + cand(c) + " = " + expr + "; ";
        for (const auto& kid : kid_names)
          sel += "CREATE " + kid + "/L/win_" + cand(c) + " = " + expr + "; ";
      }
      sel += "UPDATE self/L/done = true";
    } else {
      std::string ready = "exists(L/win_" + cand(0) + ")";
      for (std::size_t c = 1; c < k; ++c) ready += " AND exists(L/win_" + cand(c) + ")";
      sel = "IF " + ready + " THEN ";
      for (const auto& kid : kid_names)
        for (std::size_t c = 0; c < k; ++c)
          sel += "CREATE " + kid + "/L/win_" + cand(c) + " = L/win_" + cand(c) + "; ";
      sel += "UPDATE self/L/done = true";
    }
    cs.resources.push_back({Kind::A, "vp_select", Value::text(sel), ""});

    out.choreography.cells.push_back(std::move(cs));
    out.start_addresses.push_back(ResourceAddress{me, Kind::L, "start"});
  }
  return out;
}

/// Reads the winner flags of one cell after a compiled run.
inline std::optional<std::size_t> compiled_winner(const Cell& cell, std::size_t k) {
  std::optional<std::size_t> winner;
  for (std::size_t c = 0; c < k; ++c) {
    const ResourceAddress addr{cell.id(), Kind::L, "win_" + detail::zero_pad(c + 1)};
    if (!cell.has(addr)) return std::nullopt;
    if (cell.read(addr) == Value::boolean(true)) {
      if (winner) return std::nullopt;  // more than one flag set
      winner = c;
    }
  }
  return winner;
}

}  // namespace orgami::vp
