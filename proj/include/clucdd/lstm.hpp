#pragma once

// Single-layer LSTM with exact backpropagation through time. Shared by the
// fusion stack (one cell per direction) and the session-count head.

#include <cmath>
#include <random>

#include <Eigen/Dense>

namespace clucdd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Gate blocks are stacked row-wise in the order input, forget, candidate,
/// output; each block has `hidden` rows.
struct LstmParams {
  Matrix w_input;   // 4H x D
  Matrix w_hidden;  // 4H x H
  Vector bias;      // 4H

  Eigen::Index hidden() const noexcept { return w_hidden.cols(); }
  Eigen::Index input() const noexcept { return w_input.cols(); }

  static LstmParams zeros(Eigen::Index input, Eigen::Index hidden) {
    return {Matrix::Zero(4 * hidden, input), Matrix::Zero(4 * hidden, hidden), Vector::Zero(4 * hidden)};
  }

  /// Uniform in [-scale, scale] with the forget-gate bias shifted by +1.
  template <typename Rng>
  static LstmParams random(Eigen::Index input, Eigen::Index hidden, double scale, Rng& rng) {
    std::uniform_real_distribution<double> u(-scale, scale);
    LstmParams p = zeros(input, hidden);
    auto fill = [&](auto& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    };
    fill(p.w_input);
    fill(p.w_hidden);
    fill(p.bias);
    p.bias.segment(hidden, hidden).array() += 1.0;
    return p;
  }
};

/// Cached per-step values; column t holds step t.
struct LstmTrace {
  Matrix inputs;  // D x T
  Matrix in_gate, forget_gate, candidate, out_gate, cell, hidden;  // H x T

  Eigen::Index steps() const noexcept { return inputs.cols(); }
};

namespace detail {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace detail

/// Runs the recurrence over the columns of `inputs` (D x T) from zero state.
inline LstmTrace lstm_forward(const Matrix& inputs, const LstmParams& p) {
  const Eigen::Index H = p.hidden();
  const Eigen::Index T = inputs.cols();
  LstmTrace tr;
  tr.inputs = inputs;
  for (Matrix* m : {&tr.in_gate, &tr.forget_gate, &tr.candidate, &tr.out_gate, &tr.cell, &tr.hidden}) {
    m->resize(H, T);
  }
  Matrix pre = p.w_input * inputs;
  pre.colwise() += p.bias;
  Vector h = Vector::Zero(H);
  Vector c = Vector::Zero(H);
  for (Eigen::Index t = 0; t < T; ++t) {
    Vector z = pre.col(t) + p.w_hidden * h;
    for (Eigen::Index j = 0; j < H; ++j) {
      const double i = detail::sigmoid(z[j]);
      const double f = detail::sigmoid(z[H + j]);
      const double g = std::tanh(z[2 * H + j]);
      const double o = detail::sigmoid(z[3 * H + j]);
      c[j] = f * c[j] + i * g;
      h[j] = o * std::tanh(c[j]);
      tr.in_gate(j, t) = i;
      tr.forget_gate(j, t) = f;
      tr.candidate(j, t) = g;
      tr.out_gate(j, t) = o;
    }
    tr.cell.col(t) = c;
    tr.hidden.col(t) = h;
  }
  return tr;
}

/// Given dLoss/dh_t for every step (H x T), accumulates parameter gradients
/// into `grads` and returns dLoss/dinputs (D x T).
inline Matrix lstm_backward(const LstmTrace& tr, const LstmParams& p, const Matrix& grad_hidden,
                            LstmParams& grads) {
  const Eigen::Index H = p.hidden();
  const Eigen::Index T = tr.steps();
  Matrix grad_inputs(p.input(), T);
  Vector dh_next = Vector::Zero(H);
  Vector dc_next = Vector::Zero(H);
  Vector dz(4 * H);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    for (Eigen::Index j = 0; j < H; ++j) {
      const double i = tr.in_gate(j, t);
      const double f = tr.forget_gate(j, t);
      const double g = tr.candidate(j, t);
      const double o = tr.out_gate(j, t);
      const double c_prev = t > 0 ? tr.cell(j, t - 1) : 0.0;
      const double tc = std::tanh(tr.cell(j, t));
      const double dh = grad_hidden(j, t) + dh_next[j];
      const double dc = dh * o * (1.0 - tc * tc) + dc_next[j];
      dz[j] = dc * g * i * (1.0 - i);
      dz[H + j] = dc * c_prev * f * (1.0 - f);
      dz[2 * H + j] = dc * i * (1.0 - g * g);
      dz[3 * H + j] = dh * tc * o * (1.0 - o);
      dc_next[j] = dc * f;
    }
    grads.w_input.noalias() += dz * tr.inputs.col(t).transpose();
    if (t > 0) grads.w_hidden.noalias() += dz * tr.hidden.col(t - 1).transpose();
    grads.bias += dz;
    grad_inputs.col(t).noalias() = p.w_input.transpose() * dz;
    dh_next.noalias() = p.w_hidden.transpose() * dz;
  }
  return grad_inputs;
}

}  // namespace clucdd
