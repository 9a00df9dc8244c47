// Brute-force frequent-itemset oracle: enumerate every subset of the item
// universe and count support directly.
#pragma once

#include <algorithm>
#include <vector>

#include "orgami/apriori.hpp"
#include "orgami/rng.hpp"

namespace apriorifix {

using orgami::anc::FrequentItemset;
using orgami::anc::Itemset;
using orgami::anc::Transaction;

inline std::vector<FrequentItemset> brute_force_frequent(const std::vector<Transaction>& txns,
                                                         double min_support) {
  std::vector<int> universe;
  for (const auto& t : txns)
    for (int item : t) universe.push_back(item);
  std::sort(universe.begin(), universe.end());
  universe.erase(std::unique(universe.begin(), universe.end()), universe.end());

  std::vector<FrequentItemset> out;
  const double n = static_cast<double>(txns.size());
  const std::size_t m = universe.size();
  for (std::size_t mask = 1; mask < (std::size_t{1} << m); ++mask) {
    Itemset items;
    for (std::size_t i = 0; i < m; ++i)
      if (mask & (std::size_t{1} << i)) items.push_back(universe[i]);
    std::size_t count = 0;
    for (const auto& t : txns) {
      bool all = true;
      for (int item : items)
        if (!std::binary_search(t.begin(), t.end(), item)) {
          all = false;
          break;
        }
      if (all) ++count;
    }
    if (static_cast<double>(count) >= min_support * n - 1e-9)
      out.push_back({items, static_cast<double>(count) / n});
  }
  return out;
}

inline std::vector<Transaction> random_transactions(std::uint64_t seed, int max_items = 12,
                                                    int max_txns = 50) {
  orgami::Rng rng(seed, "apriori_data");
  const int items = 3 + static_cast<int>(rng.uniform_int(0, max_items - 3));
  const int txns = 5 + static_cast<int>(rng.uniform_int(0, max_txns - 5));
  std::vector<Transaction> out;
  for (int t = 0; t < txns; ++t) {
    Transaction txn;
    for (int i = 0; i < items; ++i)
      if (rng.bernoulli(0.35)) txn.push_back(i);
    if (txn.empty()) txn.push_back(static_cast<int>(rng.uniform_int(0, items - 1)));
    out.push_back(std::move(txn));
  }
  return out;
}

inline bool same_itemsets(std::vector<FrequentItemset> a, std::vector<FrequentItemset> b) {
  const auto cmp = [](const FrequentItemset& x, const FrequentItemset& y) {
    return x.items < y.items;
  };
  std::sort(a.begin(), a.end(), cmp);
  std::sort(b.begin(), b.end(), cmp);
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].items != b[i].items) return false;
    if (std::abs(a[i].support - b[i].support) > 1e-12) return false;
  }
  return true;
}

}  // namespace apriorifix
