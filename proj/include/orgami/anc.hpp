#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "orgami/apriori.hpp"
#include "orgami/mlp.hpp"

namespace orgami::anc {

// ---------------------------------------------------------------------------
// Artificial Neural Controller: a library of ANN behaviors predicting the
// next resource states, selected by running (smoothed) prediction error.
// When no behavior predicts well the controller collects observations and
// learns a new one.
// ---------------------------------------------------------------------------

struct Hyper {
  std::size_t hidden = 16;
  double lr = 0.1;
  std::size_t epochs = 1000;
  std::uint64_t seed = 1;
  double init_scale = 0.5;
};

struct TrainResult {
  Mlp net;
  std::vector<double> epoch_losses;  // loss after each full-batch update
  bool degenerate = false;           // single-sample dataset
};

/// Full-batch gradient descent on MSE.
inline TrainResult train_behavior(const Dataset& data, const Hyper& hyper) {
  data.check();
  if (data.size() == 0) throw InvalidParams("training dataset is empty");
  TrainResult res;
  res.degenerate = data.size() == 1;
  Rng rng(hyper.seed, "mlp_init");
  res.net = Mlp::random(data.input_width, hyper.hidden, data.output_width, rng, hyper.init_scale);
  res.epoch_losses.reserve(hyper.epochs);
  for (std::size_t e = 0; e < hyper.epochs; ++e) {
    res.net.apply(res.net.gradients(data), hyper.lr);
    const double loss = res.net.loss(data);
    if (!std::isfinite(loss))
      throw InvalidParams("training diverged after " + std::to_string(e + 1) +
                          " epochs; lower the learning rate");
    res.epoch_losses.push_back(loss);
  }
  return res;
}

struct Behavior {
  std::size_t id = 0;
  Mlp net;
  double smoothed_error = 0.0;
  bool error_known = false;
  std::uint64_t inserted_at = 0;
  std::string dataset_fingerprint;
  Dataset training_set;
  std::vector<std::pair<Vec, Vec>> refinement;  // human-correction pairs
};

/// Library view ordered by ascending smoothed error, ties by insertion order;
/// behaviors with no error estimate yet sort last.
inline std::vector<const Behavior*> ordered_library(const std::vector<Behavior>& lib) {
  std::vector<const Behavior*> view;
  view.reserve(lib.size());
  for (const auto& b : lib) view.push_back(&b);
  std::stable_sort(view.begin(), view.end(), [](const Behavior* a, const Behavior* b) {
    const double ea = a->error_known ? a->smoothed_error : std::numeric_limits<double>::infinity();
    const double eb = b->error_known ? b->smoothed_error : std::numeric_limits<double>::infinity();
    if (ea != eb) return ea < eb;
    return a->inserted_at < b->inserted_at;
  });
  return view;
}

struct SelectionResult {
  bool learn_new = true;
  std::size_t behavior = 0;  // behavior id when !learn_new
};

/// Best behavior if its smoothed error beats the selection threshold,
/// otherwise LearnNew. An empty library always learns.
inline SelectionResult select_behavior(const std::vector<Behavior>& lib, double theta_select) {
  const auto view = ordered_library(lib);
  if (view.empty() || !view.front()->error_known || view.front()->smoothed_error >= theta_select)
    return SelectionResult{true, 0};
  return SelectionResult{false, view.front()->id};
}

struct ControllerConfig {
  std::size_t context_width = 0;
  std::size_t state_width = 0;
  double theta_select = 0.01;
  double theta_learn = 0.01;  // collection trigger; defaults equal to theta_select
  double alpha = 0.3;         // smoothing of the per-step MSE
  std::size_t buffer_target = 40;
  Hyper hyper;
  std::size_t max_behaviors = 0;       // 0 = unbounded
  std::size_t refinement_trigger = 0;  // 0 = corrections collected but never retrained
};

class Controller {
public:
  explicit Controller(ControllerConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.context_width == 0 || cfg_.state_width == 0)
      throw InvalidParams("controller widths must be positive");
  }

  struct StepResult {
    std::optional<Vec> action;             // prediction of the selected behavior
    std::optional<std::size_t> selected;   // behavior id
    double selected_error = 0.0;           // this step's raw MSE of the selection
    bool trained = false;
    bool refined = false;
  };

  const ControllerConfig& config() const { return cfg_; }
  const std::vector<Behavior>& library() const { return lib_; }
  bool collecting() const { return collecting_; }
  std::size_t buffer_size() const { return buffer_.size(); }

  /// One observation: update every behavior's smoothed error, select or
  /// collect, and hand back the control action if a behavior is trusted.
  StepResult step(const Vec& context, const Vec& actual_next) {
    if (context.size() != cfg_.context_width || actual_next.size() != cfg_.state_width)
      throw WidthMismatch("observation width mismatch");
    ++steps_;
    StepResult res;

    std::vector<Vec> predictions(lib_.size());
    for (std::size_t i = 0; i < lib_.size(); ++i) {
      predictions[i] = lib_[i].net.forward(context);
      const double err = mse(predictions[i], actual_next);
      if (lib_[i].error_known)
        lib_[i].smoothed_error = (1.0 - cfg_.alpha) * lib_[i].smoothed_error + cfg_.alpha * err;
      else {
        lib_[i].smoothed_error = err;
        lib_[i].error_known = true;
      }
    }

    const SelectionResult sel = select_behavior(lib_, cfg_.theta_select);
    if (!sel.learn_new) {
      collecting_ = false;
      buffer_.clear();
      Behavior& b = behavior(sel.behavior);
      const std::size_t idx = index_of(sel.behavior);
      res.selected = sel.behavior;
      res.action = predictions[idx];
      res.selected_error = mse(predictions[idx], actual_next);
      if (res.selected_error > 0.0) {
        b.refinement.push_back({context, actual_next});
        if (b.refinement.size() > cfg_.buffer_target)
          b.refinement.erase(b.refinement.begin());
        if (cfg_.refinement_trigger > 0 && b.refinement.size() >= cfg_.refinement_trigger) {
          refine_behavior(b);
          res.refined = true;
        }
      }
      return res;
    }

    // No trustworthy behavior: collect data for a new one.
    const double best = lib_.empty() ? std::numeric_limits<double>::infinity()
                                     : ordered_library(lib_).front()->smoothed_error;
    if (!collecting_ && (lib_.empty() || best >= cfg_.theta_learn)) collecting_ = true;
    if (collecting_) {
      buffer_.push_back({context, actual_next});
      if (buffer_.size() >= cfg_.buffer_target) {
        train_from_buffer();
        res.trained = true;
      }
    }
    return res;
  }

  const Behavior& behavior(std::size_t id) const {
    return lib_[const_cast<Controller*>(this)->index_of(id)];
  }
  Behavior& behavior(std::size_t id) { return lib_[index_of(id)]; }

private:
  std::size_t index_of(std::size_t id) const {
    for (std::size_t i = 0; i < lib_.size(); ++i)
      if (lib_[i].id == id) return i;
    throw NotFound("no behavior with id " + std::to_string(id));
  }

  void train_from_buffer() {
    Dataset data{cfg_.context_width, cfg_.state_width, {}, {}};
    for (auto& [in, out] : buffer_) data.push(in, out);
    Hyper hyper = cfg_.hyper;
    hyper.seed = cfg_.hyper.seed + next_id_;  // distinct deterministic init per behavior
    TrainResult tr = train_behavior(data, hyper);

    if (cfg_.max_behaviors > 0 && lib_.size() >= cfg_.max_behaviors) evict_worst();
    Behavior b;
    b.id = next_id_++;
    b.net = std::move(tr.net);
    b.inserted_at = steps_;
    b.dataset_fingerprint = data.fingerprint();
    b.training_set = std::move(data);
    lib_.push_back(std::move(b));
    buffer_.clear();
    collecting_ = false;
  }

  void evict_worst() {
    auto worst = lib_.begin();
    for (auto it = lib_.begin(); it != lib_.end(); ++it) {
      const double ew = worst->error_known ? worst->smoothed_error : -1;
      const double ei = it->error_known ? it->smoothed_error : -1;
      if (ei > ew) worst = it;
    }
    lib_.erase(worst);
  }

  /// Retrains on the original dataset mixed with the collected corrections.
  void refine_behavior(Behavior& b) {
    Dataset data = b.training_set;
    for (const auto& [in, out] : b.refinement) data.push(in, out);
    Hyper hyper = cfg_.hyper;
    hyper.seed = cfg_.hyper.seed + b.id;
    TrainResult tr = train_behavior(data, hyper);
    b.net = std::move(tr.net);
    b.training_set = std::move(data);
    b.dataset_fingerprint = b.training_set.fingerprint();
    b.refinement.clear();
  }

  ControllerConfig cfg_;
  std::vector<Behavior> lib_;
  std::vector<std::pair<Vec, Vec>> buffer_;
  bool collecting_ = false;
  std::uint64_t steps_ = 0;
  std::size_t next_id_ = 1;
};

// ---------------------------------------------------------------------------
// Decision-tree dataset generation ("predefined behaviors" path)
// ---------------------------------------------------------------------------

struct DecisionTree {
  struct Node {
    bool leaf = false;
    int dim = -1;          // split: context[dim] > threshold ? right : left
    double threshold = 0;
    int left = -1, right = -1;
    Vec label;             // leaf payload
  };
  std::vector<Node> nodes;  // node 0 is the root

  static DecisionTree leaf(Vec label) {
    DecisionTree t;
    t.nodes.push_back(Node{true, -1, 0, -1, -1, std::move(label)});
    return t;
  }

  void validate_total() const {
    if (nodes.empty()) throw IncompleteTree("decision tree has no nodes");
    for (const auto& n : nodes) {
      if (n.leaf) continue;
      if (n.left < 0 || n.right < 0 || n.left >= static_cast<int>(nodes.size()) ||
          n.right >= static_cast<int>(nodes.size()))
        throw IncompleteTree("decision tree has a dangling branch");
    }
  }

  const Vec& eval(const Vec& context) const {
    int i = 0;
    while (true) {
      const Node& n = nodes[i];
      if (n.leaf) return n.label;
      if (n.dim < 0 || n.dim >= static_cast<int>(context.size()))
        throw IncompleteTree("split dimension out of range");
      i = context[n.dim] > n.threshold ? n.right : n.left;
    }
  }
};

/// n i.i.d. contexts uniform over the declared per-dimension domains, labels
/// from the tree's leaves. Mix with collected runtime data by appending.
inline Dataset generate_dataset_from_dt(const DecisionTree& dt,
                                        const std::vector<std::pair<double, double>>& domains,
                                        std::size_t n, std::uint64_t seed) {
  dt.validate_total();
  if (domains.empty()) throw InvalidParams("context domains required");
  Rng rng(seed, "dt_dataset");
  Dataset data;
  data.input_width = domains.size();
  data.output_width = dt.nodes.front().leaf ? dt.nodes.front().label.size() : 0;
  for (std::size_t s = 0; s < n; ++s) {
    Vec ctx(domains.size());
    for (std::size_t d = 0; d < domains.size(); ++d)
      ctx[d] = rng.uniform_real(domains[d].first, domains[d].second);
    Vec label = dt.eval(ctx);
    if (data.output_width == 0) data.output_width = label.size();
    data.push(std::move(ctx), std::move(label));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Discretization bridge to Apriori: equal-width bins per real dimension;
// item id = dim * bins + bin.
// ---------------------------------------------------------------------------

struct Discretization {
  std::size_t bins = 4;
  std::vector<std::pair<double, double>> ranges;  // per column (inputs then targets)
  std::vector<std::string> item_names;
};

inline std::pair<std::vector<Transaction>, Discretization> discretize(const Dataset& data,
                                                                      std::size_t bins = 4) {
  if (bins < 2) throw InvalidParams("need at least 2 bins");
  Discretization disc;
  disc.bins = bins;
  const std::size_t cols = data.input_width + data.output_width;
  disc.ranges.assign(cols, {std::numeric_limits<double>::infinity(),
                            -std::numeric_limits<double>::infinity()});
  const auto col_value = [&](std::size_t row, std::size_t col) {
    return col < data.input_width ? data.inputs[row][col]
                                  : data.targets[row][col - data.input_width];
  };
  for (std::size_t r = 0; r < data.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      disc.ranges[c].first = std::min(disc.ranges[c].first, col_value(r, c));
      disc.ranges[c].second = std::max(disc.ranges[c].second, col_value(r, c));
    }
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t b = 0; b < bins; ++b) {
      const std::string col = c < data.input_width
                                  ? "x" + std::to_string(c)
                                  : "y" + std::to_string(c - data.input_width);
      disc.item_names.push_back(col + "_b" + std::to_string(b));
    }
  std::vector<Transaction> txns;
  txns.reserve(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    Transaction t;
    for (std::size_t c = 0; c < cols; ++c) {
      const auto [lo, hi] = disc.ranges[c];
      const double width = hi - lo;
      std::size_t bin = 0;
      if (width > 0) {
        bin = static_cast<std::size_t>((col_value(r, c) - lo) / width * static_cast<double>(bins));
        if (bin >= bins) bin = bins - 1;
      }
      t.push_back(static_cast<int>(c * bins + bin));
    }
    std::sort(t.begin(), t.end());
    txns.push_back(std::move(t));
  }
  return {txns, disc};
}

// ---------------------------------------------------------------------------
// Serialization: dataset CSV (context columns then next-state columns) and
// behavior weights as row-major JSON matrices.
// ---------------------------------------------------------------------------

inline std::string dataset_csv(const Dataset& data) {
  std::string out;
  for (std::size_t c = 0; c < data.input_width; ++c) {
    if (c) out += ',';
    out += "x" + std::to_string(c);
  }
  for (std::size_t c = 0; c < data.output_width; ++c) {
    out += ",y" + std::to_string(c);
  }
  out += '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.input_width; ++c) {
      if (c) out += ',';
      out += format_real(data.inputs[r][c]);
    }
    for (std::size_t c = 0; c < data.output_width; ++c) {
      out += ',';
      out += format_real(data.targets[r][c]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace orgami::anc
