#pragma once

// Sequential feature fusion: per-utterance linear projection, dialogue-level
// bidirectional LSTM, then linear + ReLU + L2 normalization.

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "clucdd/lstm.hpp"

namespace clucdd {

/// Which parts of the fusion stack are active. `no_bilstm` drops the
/// recurrent layer (projection feeds the feed-forward layer directly);
/// `no_sff` L2-normalizes the pooled encoder output and nothing else.
enum class SffVariant { full, no_bilstm, no_sff };

inline std::string to_string(SffVariant v) {
  switch (v) {
    case SffVariant::full: return "full";
    case SffVariant::no_bilstm: return "no_bilstm";
    case SffVariant::no_sff: return "no_sff";
  }
  return "full";
}

inline SffVariant sff_variant_from_string(const std::string& s) {
  if (s == "full") return SffVariant::full;
  if (s == "no_bilstm") return SffVariant::no_bilstm;
  if (s == "no_sff") return SffVariant::no_sff;
  throw std::invalid_argument("unknown model variant '" + s + "'");
}

inline constexpr double kNormEpsilon = 1e-12;

struct SffParams {
  Matrix fc_weight;  // d x d
  Vector fc_bias;    // d
  LstmParams forward;   // hidden d/2
  LstmParams backward;  // hidden d/2
  Matrix ffn_weight;  // d x d
  Vector ffn_bias;    // d

  Eigen::Index dim() const noexcept { return fc_weight.rows(); }

  /// Tensors unused by `variant` are left empty.
  static SffParams zeros(Eigen::Index d, SffVariant variant = SffVariant::full) {
    SffParams p;
    if (variant == SffVariant::no_sff) return p;
    p.fc_weight = Matrix::Zero(d, d);
    p.fc_bias = Vector::Zero(d);
    p.ffn_weight = Matrix::Zero(d, d);
    p.ffn_bias = Vector::Zero(d);
    if (variant == SffVariant::full) {
      p.forward = LstmParams::zeros(d, d / 2);
      p.backward = LstmParams::zeros(d, d / 2);
    }
    return p;
  }

  template <typename Rng>
  static SffParams random(Eigen::Index d, SffVariant variant, Rng& rng) {
    if (d % 2 != 0) throw std::invalid_argument("model dimension must be even");
    SffParams p = zeros(d, variant);
    if (variant == SffVariant::no_sff) return p;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> u(-scale, scale);
    for (Matrix* m : {&p.fc_weight, &p.ffn_weight}) {
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = u(rng);
    }
    if (variant == SffVariant::full) {
      p.forward = LstmParams::random(d, d / 2, scale, rng);
      p.backward = LstmParams::random(d, d / 2, scale, rng);
    }
    return p;
  }
};

/// v = W u + b.
inline Vector fc_project(const Vector& u, const SffParams& p) { return p.fc_weight * u + p.fc_bias; }

/// Rows are dialogue positions. Returns [forward | backward] hidden states.
struct BiLstmTrace {
  LstmTrace forward, backward;  // backward trace runs over reversed positions
  Matrix output;                // n x d
};

inline BiLstmTrace bilstm_trace(const Matrix& v, const SffParams& p) {
  BiLstmTrace tr;
  const Matrix cols = v.transpose();
  tr.forward = lstm_forward(cols, p.forward);
  tr.backward = lstm_forward(cols.rowwise().reverse(), p.backward);
  const Eigen::Index half = p.forward.hidden();
  tr.output.resize(v.rows(), 2 * half);
  tr.output.leftCols(half) = tr.forward.hidden.transpose();
  tr.output.rightCols(half) = tr.backward.hidden.rowwise().reverse().transpose();
  return tr;
}

inline Matrix bilstm_forward(const Matrix& v, const SffParams& p) { return bilstm_trace(v, p).output; }

/// r = x / (||x|| + eps) row by row; an all-zero row stays zero.
inline Matrix l2_normalize_rows(const Matrix& x, Vector* norms = nullptr) {
  Matrix r(x.rows(), x.cols());
  if (norms) norms->resize(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double s = x.row(i).norm();
    r.row(i) = x.row(i) / (s + kNormEpsilon);
    if (norms) (*norms)[i] = s;
  }
  return r;
}

/// Backward of l2_normalize_rows for one row: (I/(s+e) - x x^T / (s (s+e)^2)) g.
inline Eigen::RowVectorXd l2_normalize_backward(const Eigen::RowVectorXd& x, double s,
                                                const Eigen::RowVectorXd& g) {
  if (s == 0.0) return Eigen::RowVectorXd::Zero(x.size());
  const double se = s + kNormEpsilon;
  return g / se - x * (x.dot(g) / (s * se * se));
}

/// r = normalize(ReLU(W h + b)).
inline Vector ffn_normalize(const Vector& h, const SffParams& p) {
  Matrix pre = (p.ffn_weight * h + p.ffn_bias).cwiseMax(0.0).transpose();
  return l2_normalize_rows(pre).row(0).transpose();
}

struct SffActivations {
  SffVariant variant = SffVariant::full;
  Matrix input;      // n x d, pooled utterance vectors
  Matrix projected;  // n x d, v
  BiLstmTrace context;
  Matrix fused;      // n x d, h (equals v without the recurrent layer)
  Matrix rectified;  // n x d, vector fed to the normalization
  Vector norms;      // n
  Matrix output;     // n x d, r
};

inline SffActivations sff_forward(const Matrix& embeddings, const SffParams& p,
                                  SffVariant variant = SffVariant::full) {
  SffActivations a;
  a.variant = variant;
  a.input = embeddings;
  if (variant == SffVariant::no_sff) {
    a.rectified = embeddings;
  } else {
    if (embeddings.cols() != p.dim()) {
      throw std::invalid_argument("sff_forward: embedding width " + std::to_string(embeddings.cols()) +
                                  " does not match model dimension " + std::to_string(p.dim()));
    }
    a.projected = embeddings * p.fc_weight.transpose();
    a.projected.rowwise() += p.fc_bias.transpose();
    if (variant == SffVariant::full) {
      a.context = bilstm_trace(a.projected, p);
      a.fused = a.context.output;
    } else {
      a.fused = a.projected;
    }
    Matrix pre = a.fused * p.ffn_weight.transpose();
    pre.rowwise() += p.ffn_bias.transpose();
    a.rectified = pre.cwiseMax(0.0);
  }
  a.output = l2_normalize_rows(a.rectified, &a.norms);
  return a;
}

struct SffGradients {
  SffParams params;
  Matrix embeddings;  // n x d
};

inline SffGradients sff_backward(const SffActivations& a, const SffParams& p, const Matrix& grad_output) {
  const Eigen::Index n = a.output.rows();
  SffGradients g;
  g.params = SffParams::zeros(p.dim(), a.variant);

  Matrix grad_rect(n, a.rectified.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    grad_rect.row(i) = l2_normalize_backward(a.rectified.row(i), a.norms[i], grad_output.row(i));
  }
  if (a.variant == SffVariant::no_sff) {
    g.embeddings = grad_rect;
    return g;
  }

  const Matrix grad_pre = (a.rectified.array() > 0.0).cast<double>() * grad_rect.array();
  g.params.ffn_weight = grad_pre.transpose() * a.fused;
  g.params.ffn_bias = grad_pre.colwise().sum().transpose();
  Matrix grad_fused = grad_pre * p.ffn_weight;

  Matrix grad_projected;
  if (a.variant == SffVariant::full) {
    const Eigen::Index half = p.forward.hidden();
    const Matrix gf = grad_fused.leftCols(half).transpose();
    const Matrix gb = grad_fused.rightCols(half).transpose().rowwise().reverse();
    Matrix dv_fwd = lstm_backward(a.context.forward, p.forward, gf, g.params.forward);
    Matrix dv_bwd = lstm_backward(a.context.backward, p.backward, gb, g.params.backward);
    grad_projected = (dv_fwd + dv_bwd.rowwise().reverse()).transpose();
  } else {
    grad_projected = grad_fused;
  }

  g.params.fc_weight = grad_projected.transpose() * a.input;
  g.params.fc_bias = grad_projected.colwise().sum().transpose();
  g.embeddings = grad_projected * p.fc_weight;
  return g;
}

}  // namespace clucdd
