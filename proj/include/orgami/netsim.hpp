#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "orgami/core.hpp"
#include "orgami/rng.hpp"

namespace orgami {

// ---------------------------------------------------------------------------
// Topology: simple undirected graph over named nodes. Generators always yield
// connected graphs and are deterministic for a fixed seed.
// ---------------------------------------------------------------------------

struct Topology {
  enum class Kind { ring, star, grid, small_world, custom };

  Kind kind = Kind::custom;
  std::vector<std::string> nodes;
  std::set<std::pair<int, int>> edges;  // normalized: first < second

  int size() const { return static_cast<int>(nodes.size()); }

  int index_of(const std::string& node) const {
    for (int i = 0; i < size(); ++i)
      if (nodes[i] == node) return i;
    throw InvalidParams("node '" + node + "' not in topology");
  }

  bool has_edge(int u, int v) const {
    if (u > v) std::swap(u, v);
    return edges.count({u, v}) != 0;
  }

  void add_edge(int u, int v) {
    if (u == v) throw InvalidParams("self-loop edge");
    if (u > v) std::swap(u, v);
    edges.insert({u, v});
  }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(nodes.size());
    for (auto [u, v] : edges) {
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
  }

  int max_degree() const {
    std::vector<int> deg(nodes.size(), 0);
    for (auto [u, v] : edges) {
      ++deg[u];
      ++deg[v];
    }
    return deg.empty() ? 0 : *std::max_element(deg.begin(), deg.end());
  }

  bool connected() const {
    if (nodes.empty()) return true;
    const auto adj = adjacency();
    std::vector<bool> seen(nodes.size(), false);
    std::deque<int> queue{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v : adj[u])
        if (!seen[v]) {
          seen[v] = true;
          ++count;
          queue.push_back(v);
        }
    }
    return count == nodes.size();
  }

  /// Hop distances from `src` to every node (-1 when unreachable).
  std::vector<int> distances_from(int src) const {
    const auto adj = adjacency();
    std::vector<int> dist(nodes.size(), -1);
    std::deque<int> queue{src};
    dist[src] = 0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v : adj[u])
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
    }
    return dist;
  }

  /// Shortest path src -> dst; at every step the next hop is the neighbor
  /// closest to dst, ties broken by lowest node id. Empty when unreachable.
  std::vector<int> shortest_path(int src, int dst) const {
    if (src == dst) return {src};
    const auto dist = distances_from(dst);
    if (dist[src] < 0) return {};
    const auto adj = adjacency();
    std::vector<int> path{src};
    int u = src;
    while (u != dst) {
      int best = -1;
      for (int v : adj[u]) {
        if (dist[v] != dist[u] - 1) continue;
        if (best < 0 || nodes[v] < nodes[best]) best = v;
      }
      path.push_back(best);
      u = best;
    }
    return path;
  }

  double clustering_coefficient() const {
    const auto adj = adjacency();
    double sum = 0;
    int counted = 0;
    for (std::size_t u = 0; u < adj.size(); ++u) {
      const auto& nb = adj[u];
      if (nb.size() < 2) {
        ++counted;  // convention: C_u = 0
        continue;
      }
      int links = 0;
      for (std::size_t i = 0; i < nb.size(); ++i)
        for (std::size_t j = i + 1; j < nb.size(); ++j)
          if (has_edge(nb[i], nb[j])) ++links;
      sum += 2.0 * links / (static_cast<double>(nb.size()) * (nb.size() - 1));
      ++counted;
    }
    return counted ? sum / counted : 0.0;
  }

  double mean_path_length() const {
    double sum = 0;
    std::int64_t pairs = 0;
    for (int u = 0; u < size(); ++u) {
      const auto dist = distances_from(u);
      for (int v = u + 1; v < size(); ++v) {
        if (dist[v] < 0) throw InvalidParams("mean path length on disconnected graph");
        sum += dist[v];
        ++pairs;
      }
    }
    return pairs ? sum / static_cast<double>(pairs) : 0.0;
  }

  std::string to_edge_list() const {
    std::string out;
    for (auto [u, v] : edges) {
      out += nodes[u];
      out += ' ';
      out += nodes[v];
      out += '\n';
    }
    return out;
  }
};

namespace topo {

inline std::vector<std::string> default_node_names(int n) {
  std::vector<std::string> names;
  names.reserve(n);
  for (int i = 0; i < n; ++i) names.push_back("n" + std::to_string(i));
  return names;
}

inline Topology ring(int n) {
  if (n < 3) throw InvalidParams("ring needs n >= 3");
  Topology t;
  t.kind = Topology::Kind::ring;
  t.nodes = default_node_names(n);
  for (int i = 0; i < n; ++i) t.add_edge(i, (i + 1) % n);
  return t;
}

inline Topology star(int n) {
  if (n < 3) throw InvalidParams("star needs n >= 3");
  Topology t;
  t.kind = Topology::Kind::star;
  t.nodes = default_node_names(n);
  for (int i = 1; i < n; ++i) t.add_edge(0, i);
  return t;
}

inline Topology grid(int n) {
  if (n < 3) throw InvalidParams("grid needs n >= 3");
  int rows = 1;
  for (int r = static_cast<int>(std::sqrt(static_cast<double>(n))); r >= 1; --r)
    if (n % r == 0) {
      rows = r;
      break;
    }
  const int cols = n / rows;
  Topology t;
  t.kind = Topology::Kind::grid;
  t.nodes = default_node_names(n);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int u = r * cols + c;
      if (c + 1 < cols) t.add_edge(u, u + 1);
      if (r + 1 < rows) t.add_edge(u, u + cols);
    }
  return t;
}

/// Watts-Strogatz small world: k-ring lattice, each lattice edge rewired with
/// probability beta. Regenerates with a fresh stream until connected.
inline Topology small_world(int n, int k, double beta, std::uint64_t seed) {
  if (n < 3) throw InvalidParams("small_world needs n >= 3");
  if (k < 2 || k % 2 != 0 || k >= n) throw InvalidParams("small_world needs even k with 2 <= k < n");
  if (beta < 0.0 || beta > 1.0) throw InvalidParams("beta must be in [0,1]");
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed ^ (attempt * 0x9E3779B97F4A7C15ull), "watts_strogatz");
    Topology t;
    t.kind = Topology::Kind::small_world;
    t.nodes = default_node_names(n);
    for (int i = 0; i < n; ++i)
      for (int j = 1; j <= k / 2; ++j) t.add_edge(i, (i + j) % n);
    if (beta > 0.0) {
      const auto lattice = t.edges;  // rewire decisions iterate the lattice edges
      for (auto [u, v] : lattice) {
        if (!rng.bernoulli(beta)) continue;
        // Replace (u,v) by (u,w) for a random w that keeps the graph simple.
        int w = -1;
        for (int tries = 0; tries < 4 * n; ++tries) {
          const int cand = static_cast<int>(rng.uniform_int(0, n - 1));
          if (cand == u || cand == v || t.has_edge(u, cand)) continue;
          w = cand;
          break;
        }
        if (w < 0) continue;
        t.edges.erase({std::min(u, v), std::max(u, v)});
        t.add_edge(u, w);
      }
    }
    if (t.connected()) return t;
  }
}

inline Topology from_edges(const std::vector<std::string>& nodes,
                           const std::vector<std::pair<std::string, std::string>>& edges) {
  Topology t;
  t.kind = Topology::Kind::custom;
  t.nodes = nodes;
  for (const auto& [a, b] : edges) t.add_edge(t.index_of(a), t.index_of(b));
  return t;
}

struct GenParams {
  int k = 4;
  double beta = 0.0;
};

inline Topology generate(Topology::Kind kind, int n, const GenParams& params, std::uint64_t seed) {
  switch (kind) {
    case Topology::Kind::ring: return ring(n);
    case Topology::Kind::star: return star(n);
    case Topology::Kind::grid: return grid(n);
    case Topology::Kind::small_world: return small_world(n, params.k, params.beta, seed);
    case Topology::Kind::custom: throw InvalidParams("custom topologies take an explicit edge list");
  }
  throw InvalidParams("unknown topology kind");
}

}  // namespace topo

// ---------------------------------------------------------------------------
// Link model: per-hop delay distribution and loss probability.
// ---------------------------------------------------------------------------

struct LinkModel {
  enum class DelayKind { fixed, uniform };
  DelayKind delay_kind = DelayKind::fixed;
  SimTime fixed_delay = 1;
  SimTime delay_lo = 0, delay_hi = 0;
  double loss_prob = 0.0;

  static LinkModel fixed(SimTime d, double loss = 0.0) {
    LinkModel m;
    m.delay_kind = DelayKind::fixed;
    m.fixed_delay = d;
    m.loss_prob = loss;
    m.validate();
    return m;
  }
  static LinkModel uniform(SimTime lo, SimTime hi, double loss = 0.0) {
    LinkModel m;
    m.delay_kind = DelayKind::uniform;
    m.delay_lo = lo;
    m.delay_hi = hi;
    m.loss_prob = loss;
    m.validate();
    return m;
  }

  void validate() const {
    if (loss_prob < 0.0 || loss_prob > 1.0) throw InvalidParams("loss_prob must be in [0,1]");
    if (delay_kind == DelayKind::fixed ? fixed_delay < 0 : (delay_lo < 0 || delay_hi < delay_lo))
      throw InvalidParams("delay must be >= 0");
  }

  SimTime draw_delay(Rng& rng) const {
    if (delay_kind == DelayKind::fixed) return fixed_delay;
    return rng.uniform_int(delay_lo, delay_hi);
  }
};

// ---------------------------------------------------------------------------
// Event queue and simulator. Simulated time is integer ticks; events are
// totally ordered by (time, node, sequence) so replays are bit-identical.
// ---------------------------------------------------------------------------

struct SimEvent {
  enum class Kind { message, local, control };

  SimTime time = 0;
  std::string node;  // owning cell
  std::uint64_t seq = 0;
  Kind kind = Kind::local;
  std::uint64_t ref = 0;  // caller-side payload key; message id for messages

  friend bool operator>(const SimEvent& a, const SimEvent& b) {
    return std::tie(a.time, a.node, a.seq) > std::tie(b.time, b.node, b.seq);
  }
};

struct MessageLogEntry {
  SimTime send_time = 0;
  std::string src, dst;
  int hops = 0;
  std::optional<SimTime> delivered_time;  // nullopt = dropped
};

struct SendResult {
  bool delivered = false;
  SimTime deliver_time = 0;
  std::uint64_t msg_id = 0;
};

class Simulator {
public:
  Simulator() = default;
  Simulator(Topology topology, LinkModel link, std::uint64_t seed)
      : topo_(std::move(topology)), link_(link), seed_(seed) {}

  const Topology& topology() const { return topo_; }
  const LinkModel& link() const { return link_; }
  SimTime now() const { return now_; }
  bool idle() {
    purge();
    return heap_.empty();
  }
  std::size_t pending() {
    purge();
    return heap_.size();
  }
  const std::vector<MessageLogEntry>& message_log() const { return msg_log_; }

  SimTime next_time() {
    purge();
    if (heap_.empty()) throw InvalidParams("event queue is empty");
    return heap_.top().time;
  }

  void schedule(SimTime time, const std::string& node, SimEvent::Kind kind, std::uint64_t ref) {
    if (time < now_) throw InvalidParams("cannot schedule into the past");
    heap_.push(SimEvent{time, node, seq_++, kind, ref});
  }

  /// Routes src -> dst over the current topology. All per-hop loss and delay
  /// draws come from the source node's stream at send time; if every hop
  /// survives, one delivery event is scheduled at now + sum of hop delays.
  SendResult send(const std::string& src, const std::string& dst, std::uint64_t ref, SimTime now) {
    if (src == dst) throw InvalidParams("send requires src != dst");
    const int s = topo_.index_of(src), d = topo_.index_of(dst);
    const auto path = topo_.shortest_path(s, d);
    if (path.empty()) throw Unreachable("no path from '" + src + "' to '" + dst + "'");
    Rng& rng = node_rng(src);
    bool lost = false;
    std::vector<SimTime> hop_arrivals;
    std::vector<std::string> path_names;
    path_names.reserve(path.size());
    for (int idx : path) path_names.push_back(topo_.nodes[idx]);
    SimTime t = now;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (rng.bernoulli(link_.loss_prob)) lost = true;
      t += link_.draw_delay(rng);  // draws always consumed: loss never shifts the stream
      hop_arrivals.push_back(t);
    }
    MessageLogEntry entry{now, src, dst, static_cast<int>(path.size()) - 1, std::nullopt};
    if (lost) {
      msg_log_.push_back(entry);
      return SendResult{false, 0, 0};
    }
    const std::uint64_t id = next_msg_++;
    entry.delivered_time = t;
    msg_log_.push_back(entry);
    in_flight_[id] = Route{std::move(path_names), std::move(hop_arrivals), msg_log_.size() - 1, ref};
    schedule(t, dst, SimEvent::Kind::message, id);
    return SendResult{true, t, id};
  }

  /// Replaces the topology. In-flight messages whose remaining hops use a
  /// removed edge are dropped; hops completed strictly before `at_time`
  /// survive. Returns the payload refs of dropped messages.
  std::vector<std::uint64_t> switch_topology(const Topology& next, SimTime at_time) {
    if (at_time < now_) throw InvalidParams("topology switch in the past");
    std::vector<std::uint64_t> dropped_refs;
    for (auto& [id, route] : in_flight_) {
      if (dropped_msgs_.count(id)) continue;
      bool ok = true;
      for (std::size_t i = 0; i + 1 < route.path.size(); ++i) {
        if (route.hop_arrivals[i] < at_time) continue;  // hop already completed
        if (!edge_present(next, route.path[i], route.path[i + 1])) {
          ok = false;
          break;
        }
      }
      if (!ok) {
        dropped_msgs_.insert(id);
        msg_log_[route.log_index].delivered_time = std::nullopt;
        dropped_refs.push_back(route.ref);
      }
    }
    topo_ = next;
    return dropped_refs;
  }

  /// Pops the minimal event and advances the clock. Messages dropped by a
  /// topology switch are skipped. Empty optional when the queue is drained.
  std::optional<SimEvent> step() {
    purge();
    if (heap_.empty()) return std::nullopt;
    SimEvent ev = heap_.top();
    heap_.pop();
    now_ = ev.time;
    if (ev.kind == SimEvent::Kind::message) {
      const auto it = in_flight_.find(ev.ref);
      ev.ref = it == in_flight_.end() ? 0 : it->second.ref;
      if (it != in_flight_.end()) in_flight_.erase(it);
    }
    return ev;
  }

  std::string message_log_csv() const {
    std::string out = "send_time,src,dst,hops,delivered_time\n";
    for (const auto& e : msg_log_) {
      out += std::to_string(e.send_time);
      out += ',';
      out += e.src;
      out += ',';
      out += e.dst;
      out += ',';
      out += std::to_string(e.hops);
      out += ',';
      out += e.delivered_time ? std::to_string(*e.delivered_time) : std::string("DROPPED");
      out += '\n';
    }
    return out;
  }

private:
  // Paths are stored by node name so a replacement topology that reorders or
  // drops nodes is handled uniformly.
  struct Route {
    std::vector<std::string> path;
    std::vector<SimTime> hop_arrivals;
    std::size_t log_index = 0;
    std::uint64_t ref = 0;
  };

  static bool edge_present(const Topology& t, const std::string& a, const std::string& b) {
    int u = -1, v = -1;
    for (int i = 0; i < t.size(); ++i) {
      if (t.nodes[i] == a) u = i;
      if (t.nodes[i] == b) v = i;
    }
    return u >= 0 && v >= 0 && t.has_edge(u, v);
  }

  // Messages dropped by a topology switch sit in the heap until they surface;
  // discard them here so queue inspection never sees stale entries.
  void purge() {
    while (!heap_.empty()) {
      const SimEvent& top = heap_.top();
      if (top.kind != SimEvent::Kind::message || !dropped_msgs_.count(top.ref)) return;
      dropped_msgs_.erase(top.ref);
      in_flight_.erase(top.ref);
      heap_.pop();
    }
  }

  Rng& node_rng(const std::string& node) {
    auto it = node_rng_.find(node);
    if (it == node_rng_.end()) it = node_rng_.emplace(node, Rng(seed_, "node:" + node)).first;
    return it->second;
  }

  Topology topo_;
  LinkModel link_;
  std::uint64_t seed_ = 0;
  SimTime now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t next_msg_ = 1;
  std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<>> heap_;
  std::map<std::uint64_t, Route> in_flight_;
  std::set<std::uint64_t> dropped_msgs_;
  std::vector<MessageLogEntry> msg_log_;
  std::map<std::string, Rng> node_rng_;
};

}  // namespace orgami
