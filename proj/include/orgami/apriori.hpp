#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "orgami/core.hpp"

namespace orgami::anc {

// ---------------------------------------------------------------------------
// Classic Apriori: level-wise frequent itemset mining plus confidence-filtered
// association rules. Transactions are sorted vectors of item ids; supports
// are fractions of the transaction count.
// ---------------------------------------------------------------------------

using Itemset = std::vector<int>;  // sorted, unique
using Transaction = std::vector<int>;

struct FrequentItemset {
  Itemset items;
  double support = 0;
};

struct AssociationRule {
  Itemset antecedent, consequent;
  double support = 0;    // support of antecedent + consequent
  double confidence = 0;
};

namespace detail {

inline bool contains_all(const Transaction& t, const Itemset& items) {
  for (int item : items)
    if (!std::binary_search(t.begin(), t.end(), item)) return false;
  return true;
}

inline std::size_t count_support(const std::vector<Transaction>& txns, const Itemset& items) {
  std::size_t c = 0;
  for (const auto& t : txns)
    if (contains_all(t, items)) ++c;
  return c;
}

// Join step: two frequent (k-1)-itemsets sharing their first k-2 items yield
// one k-candidate; prune candidates with an infrequent (k-1)-subset.
inline std::vector<Itemset> candidates(const std::vector<Itemset>& prev) {
  std::set<Itemset> frequent(prev.begin(), prev.end());
  std::vector<Itemset> out;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    for (std::size_t j = i + 1; j < prev.size(); ++j) {
      const Itemset& a = prev[i];
      const Itemset& b = prev[j];
      if (!std::equal(a.begin(), a.end() - 1, b.begin(), b.end() - 1)) continue;
      Itemset cand(a.begin(), a.end() - 1);
      cand.push_back(std::min(a.back(), b.back()));
      cand.push_back(std::max(a.back(), b.back()));
      bool ok = true;
      for (std::size_t drop = 0; drop + 2 < cand.size() && ok; ++drop) {
        Itemset sub;
        for (std::size_t k = 0; k < cand.size(); ++k)
          if (k != drop) sub.push_back(cand[k]);
        ok = frequent.count(sub) != 0;
      }
      if (ok) out.push_back(std::move(cand));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline void subsets_of(const Itemset& items, std::vector<Itemset>& out) {
  out.clear();
  const std::size_t n = items.size();
  for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
    Itemset s;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::size_t{1} << i)) s.push_back(items[i]);
    out.push_back(std::move(s));
  }
}

}  // namespace detail

inline std::vector<FrequentItemset> apriori(const std::vector<Transaction>& transactions,
                                            double min_support) {
  if (min_support <= 0.0 || min_support > 1.0)
    throw InvalidParams("min_support must be in (0,1]");
  std::vector<FrequentItemset> result;
  if (transactions.empty()) return result;
  const double n = static_cast<double>(transactions.size());
  const double threshold = min_support * n - 1e-9;

  std::map<int, std::size_t> singles;
  for (const auto& t : transactions)
    for (int item : t) singles[item] += 1;
  std::vector<Itemset> level;
  for (const auto& [item, count] : singles) {
    if (static_cast<double>(count) >= threshold) {
      level.push_back({item});
      result.push_back({{item}, static_cast<double>(count) / n});
    }
  }
  while (!level.empty()) {
    std::vector<Itemset> next;
    for (const auto& cand : detail::candidates(level)) {
      const std::size_t count = detail::count_support(transactions, cand);
      if (static_cast<double>(count) >= threshold) {
        next.push_back(cand);
        result.push_back({cand, static_cast<double>(count) / n});
      }
    }
    level = std::move(next);
  }
  return result;
}

/// Rules X => Y from every frequent itemset, confidence = sup(X u Y)/sup(X),
/// sorted by support desc, confidence desc, then lexicographic.
inline std::vector<AssociationRule> extract_rules_apriori(
    const std::vector<Transaction>& transactions, double min_support, double min_confidence) {
  if (min_confidence <= 0.0 || min_confidence > 1.0)
    throw InvalidParams("min_confidence must be in (0,1]");
  const auto frequent = apriori(transactions, min_support);
  std::map<Itemset, double> support;
  for (const auto& f : frequent) support[f.items] = f.support;

  std::vector<AssociationRule> rules;
  std::vector<Itemset> subsets;
  for (const auto& f : frequent) {
    if (f.items.size() < 2) continue;
    detail::subsets_of(f.items, subsets);
    for (const auto& antecedent : subsets) {
      Itemset consequent;
      std::set_difference(f.items.begin(), f.items.end(), antecedent.begin(), antecedent.end(),
                          std::back_inserter(consequent));
      const double conf = f.support / support.at(antecedent);
      if (conf + 1e-12 >= min_confidence)
        rules.push_back({antecedent, consequent, f.support, conf});
    }
  }
  std::sort(rules.begin(), rules.end(), [](const AssociationRule& a, const AssociationRule& b) {
    if (a.support != b.support) return a.support > b.support;
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.antecedent != b.antecedent) return a.antecedent < b.antecedent;
    return a.consequent < b.consequent;
  });
  return rules;
}

inline std::string rule_text(const AssociationRule& r,
                             const std::vector<std::string>* item_names = nullptr) {
  const auto items = [&](const Itemset& set) {
    std::string out = "{";
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (i) out += ", ";
      out += item_names ? (*item_names)[set[i]] : std::to_string(set[i]);
    }
    return out + "}";
  };
  char buf[64];
  std::snprintf(buf, sizeof buf, " (%.3f, %.3f)", r.support, r.confidence);
  return items(r.antecedent) + " => " + items(r.consequent) + buf;
}

}  // namespace orgami::anc
