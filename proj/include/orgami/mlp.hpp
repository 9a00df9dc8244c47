#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "orgami/core.hpp"
#include "orgami/rng.hpp"

namespace orgami::anc {

using Vec = std::vector<double>;

struct Dataset {
  std::size_t input_width = 0, output_width = 0;
  std::vector<Vec> inputs, targets;

  std::size_t size() const { return inputs.size(); }

  void push(Vec in, Vec out) {
    if (in.size() != input_width || out.size() != output_width)
      throw WidthMismatch("sample width does not match dataset");
    inputs.push_back(std::move(in));
    targets.push_back(std::move(out));
  }

  void check() const {
    if (inputs.size() != targets.size()) throw WidthMismatch("inputs/targets size mismatch");
    for (const auto& v : inputs)
      if (v.size() != input_width) throw WidthMismatch("input width mismatch");
    for (const auto& v : targets)
      if (v.size() != output_width) throw WidthMismatch("target width mismatch");
  }

  std::string fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const auto mix = [&](double d) {
      std::uint64_t bits;
      static_assert(sizeof bits == sizeof d);
      __builtin_memcpy(&bits, &d, sizeof bits);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
      }
    };
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (double d : inputs[i]) mix(d);
      for (double d : targets[i]) mix(d);
    }
    char buf[17];
    for (int i = 15; i >= 0; --i) {
      buf[i] = "0123456789abcdef"[h & 0xf];
      h >>= 4;
    }
    buf[16] = 0;
    return buf;
  }
};

inline double mse(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw WidthMismatch("mse width mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// One-hidden-layer feedforward net: tanh hidden units, linear outputs. Small
// enough that plain nested vectors beat pulling in a matrix library.
// ---------------------------------------------------------------------------

class Mlp {
public:
  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out)
      : in_(in), hidden_(hidden), out_(out),
        w1_(hidden, Vec(in, 0.0)), b1_(hidden, 0.0),
        w2_(out, Vec(hidden, 0.0)), b2_(out, 0.0) {}

  static Mlp random(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng,
                    double scale = 0.5) {
    Mlp m(in, hidden, out);
    for (auto& row : m.w1_)
      for (auto& w : row) w = rng.uniform_real(-scale, scale);
    for (auto& b : m.b1_) b = rng.uniform_real(-scale, scale);
    for (auto& row : m.w2_)
      for (auto& w : row) w = rng.uniform_real(-scale, scale);
    for (auto& b : m.b2_) b = rng.uniform_real(-scale, scale);
    return m;
  }

  std::size_t input_width() const { return in_; }
  std::size_t hidden_width() const { return hidden_; }
  std::size_t output_width() const { return out_; }

  const std::vector<Vec>& w1() const { return w1_; }
  const Vec& b1() const { return b1_; }
  const std::vector<Vec>& w2() const { return w2_; }
  const Vec& b2() const { return b2_; }

  Vec hidden_activations(const Vec& x) const {
    if (x.size() != in_) throw WidthMismatch("context width mismatch");
    Vec h(hidden_);
    for (std::size_t j = 0; j < hidden_; ++j) {
      double a = b1_[j];
      for (std::size_t i = 0; i < in_; ++i) a += w1_[j][i] * x[i];
      h[j] = std::tanh(a);
    }
    return h;
  }

  Vec forward(const Vec& x) const {
    const Vec h = hidden_activations(x);
    Vec y(out_);
    for (std::size_t k = 0; k < out_; ++k) {
      double a = b2_[k];
      for (std::size_t j = 0; j < hidden_; ++j) a += w2_[k][j] * h[j];
      y[k] = a;
    }
    return y;
  }

  /// Mean squared error over all samples and output dimensions.
  double loss(const Dataset& data) const {
    double s = 0;
    for (std::size_t n = 0; n < data.size(); ++n) {
      const Vec y = forward(data.inputs[n]);
      for (std::size_t k = 0; k < out_; ++k) {
        const double d = y[k] - data.targets[n][k];
        s += d * d;
      }
    }
    const double denom = static_cast<double>(data.size() * out_);
    return denom > 0 ? s / denom : 0.0;
  }

  struct Grads {
    std::vector<Vec> w1, w2;
    Vec b1, b2;
  };

  /// Full-batch gradient of loss() by backpropagation.
  Grads gradients(const Dataset& data) const {
    Grads g{std::vector<Vec>(hidden_, Vec(in_, 0.0)), std::vector<Vec>(out_, Vec(hidden_, 0.0)),
            Vec(hidden_, 0.0), Vec(out_, 0.0)};
    const double scale = 2.0 / static_cast<double>(data.size() * out_);
    for (std::size_t n = 0; n < data.size(); ++n) {
      const Vec& x = data.inputs[n];
      const Vec h = hidden_activations(x);
      Vec dy(out_);
      for (std::size_t k = 0; k < out_; ++k) {
        double a = b2_[k];
        for (std::size_t j = 0; j < hidden_; ++j) a += w2_[k][j] * h[j];
        dy[k] = scale * (a - data.targets[n][k]);
      }
      for (std::size_t k = 0; k < out_; ++k) {
        g.b2[k] += dy[k];
        for (std::size_t j = 0; j < hidden_; ++j) g.w2[k][j] += dy[k] * h[j];
      }
      for (std::size_t j = 0; j < hidden_; ++j) {
        double dh = 0;
        for (std::size_t k = 0; k < out_; ++k) dh += w2_[k][j] * dy[k];
        dh *= 1.0 - h[j] * h[j];
        g.b1[j] += dh;
        for (std::size_t i = 0; i < in_; ++i) g.w1[j][i] += dh * x[i];
      }
    }
    return g;
  }

  void apply(const Grads& g, double lr) {
    for (std::size_t j = 0; j < hidden_; ++j) {
      b1_[j] -= lr * g.b1[j];
      for (std::size_t i = 0; i < in_; ++i) w1_[j][i] -= lr * g.w1[j][i];
    }
    for (std::size_t k = 0; k < out_; ++k) {
      b2_[k] -= lr * g.b2[k];
      for (std::size_t j = 0; j < hidden_; ++j) w2_[k][j] -= lr * g.w2[k][j];
    }
  }

  // Flat parameter view, used by the finite-difference gradient check.
  std::size_t param_count() const { return hidden_ * in_ + hidden_ + out_ * hidden_ + out_; }

  double get_param(std::size_t p) const { return *param_ptr(const_cast<Mlp&>(*this), p); }
  void set_param(std::size_t p, double v) { *param_ptr(*this, p) = v; }

  double grad_param(const Grads& g, std::size_t p) const {
    if (p < hidden_ * in_) return g.w1[p / in_][p % in_];
    p -= hidden_ * in_;
    if (p < hidden_) return g.b1[p];
    p -= hidden_;
    if (p < out_ * hidden_) return g.w2[p / hidden_][p % hidden_];
    p -= out_ * hidden_;
    return g.b2[p];
  }

private:
  static double* param_ptr(Mlp& m, std::size_t p) {
    if (p < m.hidden_ * m.in_) return &m.w1_[p / m.in_][p % m.in_];
    p -= m.hidden_ * m.in_;
    if (p < m.hidden_) return &m.b1_[p];
    p -= m.hidden_;
    if (p < m.out_ * m.hidden_) return &m.w2_[p / m.hidden_][p % m.hidden_];
    p -= m.out_ * m.hidden_;
    return &m.b2_[p];
  }

  std::size_t in_ = 0, hidden_ = 0, out_ = 0;
  std::vector<Vec> w1_;
  Vec b1_;
  std::vector<Vec> w2_;
  Vec b2_;
};

}  // namespace orgami::anc
