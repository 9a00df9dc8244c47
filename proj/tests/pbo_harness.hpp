// Random placement instances for checking the exact solver against the
// exhaustive oracle.
#pragma once

#include "orgami/deploy.hpp"
#include "orgami/rng.hpp"

namespace pbo {

using namespace orgami;

struct RandomInstance {
  deploy::InstGraph graph;
  deploy::Target target;
};

inline RandomInstance make_random_instance(std::uint64_t seed) {
  Rng rng(seed, "pbo_instance");
  RandomInstance ri;
  const int n_nodes = 2 + static_cast<int>(rng.uniform_int(0, 2));  // 2..4
  // random connected topology: a path plus extra edges
  ri.target.topology.nodes = topo::default_node_names(n_nodes);
  for (int i = 0; i + 1 < n_nodes; ++i) ri.target.topology.add_edge(i, i + 1);
  for (int i = 0; i < n_nodes; ++i)
    for (int j = i + 2; j < n_nodes; ++j)
      if (rng.bernoulli(0.3)) ri.target.topology.add_edge(i, j);

  const int n_pinned = static_cast<int>(rng.uniform_int(0, 2));
  const int n_free = 1 + static_cast<int>(rng.uniform_int(0, 5));  // 1..6
  for (int p = 0; p < n_pinned; ++p) {
    deploy::Instance inst;
    inst.id = "s/S/pin" + std::to_string(p);
    inst.kind = Kind::S;
    inst.pinned = true;
    inst.pin_node = ri.target.topology.nodes[rng.index(n_nodes)];
    ri.graph.vertices.push_back(inst);
  }
  for (int f = 0; f < n_free; ++f) {
    deploy::Instance inst;
    inst.id = "c/L/free" + std::to_string(f);
    inst.kind = f % 2 ? Kind::L : Kind::A;
    ri.graph.vertices.push_back(inst);
  }
  std::sort(ri.graph.vertices.begin(), ri.graph.vertices.end(),
            [](const deploy::Instance& a, const deploy::Instance& b) { return a.id < b.id; });
  const std::size_t nv = ri.graph.vertices.size();
  for (std::size_t i = 0; i < nv; ++i)
    for (std::size_t j = i + 1; j < nv; ++j)
      if (rng.bernoulli(0.5)) ri.graph.add_weight(i, j, static_cast<double>(rng.uniform_int(1, 4)));

  if (rng.bernoulli(0.3)) {
    // finite capacities, kept feasible with slack
    const int cap = static_cast<int>((nv + n_nodes - 1) / n_nodes) + 1;
    for (const auto& node : ri.target.topology.nodes) ri.target.capacity[node] = cap;
  }
  return ri;
}

}  // namespace pbo
