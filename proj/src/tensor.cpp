#include "s2s/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace s2s {

namespace {

std::string shape_str(const Tensor& t) {
  return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  return full(rows, cols, 0.0, requires_grad);
}

Tensor Tensor::full(int rows, int cols, double value, bool requires_grad) {
  if (rows <= 0 || cols <= 0) {
    throw std::invalid_argument("Tensor: non-positive shape " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
  Tensor t;
  t.p_ = std::make_shared<Impl>();
  t.p_->rows = rows;
  t.p_->cols = cols;
  t.p_->data.assign(static_cast<size_t>(rows) * cols, value);
  t.p_->requires_grad = requires_grad;
  if (requires_grad) t.p_->grad.assign(t.p_->data.size(), 0.0);
  return t;
}

Tensor Tensor::from(int rows, int cols, std::vector<double> values, bool requires_grad) {
  if (static_cast<size_t>(rows) * cols != values.size()) {
    throw std::invalid_argument("Tensor: " + std::to_string(values.size()) +
                                " values for shape " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  Tensor t = zeros(rows, cols, requires_grad);
  t.p_->data = std::move(values);
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t = zeros(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

void Tensor::zero_grad() {
  if (p_->requires_grad) std::fill(p_->grad.begin(), p_->grad.end(), 0.0);
}

void Tape::record(const Tensor& out, std::function<void()> backward) {
  nodes_.push_back({out, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                std::to_string(loss.rows()) + "x" +
                                std::to_string(loss.cols()));
  }
  bool found = false;
  for (const auto& n : nodes_) {
    if (n.out.id() == loss.id()) {
      found = true;
      break;
    }
  }
  if (!found) throw std::invalid_argument("backward: loss is not on this tape");

  const_cast<Tensor&>(loss).grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

namespace {

// Every op output carries grad storage so gradients can flow through it.
Tensor make_output(int rows, int cols) { return Tensor::zeros(rows, cols, true); }

void accum(Tensor& t, int idx, double g) {
  if (t.requires_grad()) t.grad()[idx] += g;
}

}  // namespace

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ " + shape_str(a) +
                                " * " + shape_str(b));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_output(m, n);
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) out.at(i, j) += av * b.at(p, j);
    }
  }
  Tensor ac = a, bc = b;
  t.record(out, [ac, bc, out]() mutable {
    const int m = ac.rows(), k = ac.cols(), n = bc.cols();
    for (int i = 0; i < m; ++i) {
      for (int p = 0; p < k; ++p) {
        double da = 0.0;
        for (int j = 0; j < n; ++j) da += out.grad()[i * n + j] * bc.at(p, j);
        accum(ac, i * k + p, da);
      }
    }
    if (bc.requires_grad()) {
      for (int p = 0; p < k; ++p) {
        for (int j = 0; j < n; ++j) {
          double db = 0.0;
          for (int i = 0; i < m; ++i) db += ac.at(i, p) * out.grad()[i * n + j];
          bc.grad()[p * n + j] += db;
        }
      }
    }
  });
  return out;
}

Tensor matmul_nt(Tape& t, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: widths differ " + shape_str(a) + " * " +
                                shape_str(b) + "^T");
  }
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = make_output(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a.at(i, p) * b.at(j, p);
      out.at(i, j) = s;
    }
  }
  Tensor ac = a, bc = b;
  t.record(out, [ac, bc, out]() mutable {
    const int m = ac.rows(), k = ac.cols(), n = bc.rows();
    for (int i = 0; i < m; ++i) {
      for (int p = 0; p < k; ++p) {
        double da = 0.0;
        for (int j = 0; j < n; ++j) da += out.grad()[i * n + j] * bc.at(j, p);
        accum(ac, i * k + p, da);
      }
    }
    if (bc.requires_grad()) {
      for (int j = 0; j < n; ++j) {
        for (int p = 0; p < k; ++p) {
          double db = 0.0;
          for (int i = 0; i < m; ++i) db += out.grad()[i * n + j] * ac.at(i, p);
          bc.grad()[j * k + p] += db;
        }
      }
    }
  });
  return out;
}

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out = make_output(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  Tensor ac = a, bc = b;
  t.record(out, [ac, bc, out]() mutable {
    for (int i = 0; i < out.size(); ++i) {
      accum(ac, i, out.grad()[i]);
      accum(bc, i, out.grad()[i]);
    }
  });
  return out;
}

Tensor add_row_broadcast(Tape& t, const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw std::invalid_argument("add_row_broadcast: bias " + shape_str(row) +
                                " does not match " + shape_str(x));
  }
  Tensor out = make_output(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) + row.at(0, j);
  Tensor xc = x, rc = row;
  t.record(out, [xc, rc, out]() mutable {
    for (int i = 0; i < xc.rows(); ++i) {
      for (int j = 0; j < xc.cols(); ++j) {
        const double g = out.grad()[i * xc.cols() + j];
        accum(xc, i * xc.cols() + j, g);
        accum(rc, j, g);
      }
    }
  });
  return out;
}

Tensor mul(Tape& t, const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out = make_output(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  Tensor ac = a, bc = b;
  t.record(out, [ac, bc, out]() mutable {
    for (int i = 0; i < out.size(); ++i) {
      accum(ac, i, out.grad()[i] * bc.data()[i]);
      accum(bc, i, out.grad()[i] * ac.data()[i]);
    }
  });
  return out;
}

Tensor scale(Tape& t, const Tensor& a, double s) {
  Tensor out = make_output(a.rows(), a.cols());
  for (int i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
  Tensor ac = a;
  t.record(out, [ac, out, s]() mutable {
    for (int i = 0; i < out.size(); ++i) accum(ac, i, out.grad()[i] * s);
  });
  return out;
}

Tensor relu(Tape& t, const Tensor& x) {
  Tensor out = make_output(x.rows(), x.cols());
  for (int i = 0; i < x.size(); ++i) out.data()[i] = std::max(0.0, x.data()[i]);
  Tensor xc = x;
  t.record(out, [xc, out]() mutable {
    for (int i = 0; i < out.size(); ++i)
      if (xc.data()[i] > 0.0) accum(xc, i, out.grad()[i]);
  });
  return out;
}

Tensor sigmoid(Tape& t, const Tensor& x) {
  Tensor out = make_output(x.rows(), x.cols());
  for (int i = 0; i < x.size(); ++i) out.data()[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  Tensor xc = x;
  t.record(out, [xc, out]() mutable {
    for (int i = 0; i < out.size(); ++i) {
      const double s = out.data()[i];
      accum(xc, i, out.grad()[i] * s * (1.0 - s));
    }
  });
  return out;
}

Tensor sum(Tape& t, const Tensor& x) {
  Tensor out = make_output(1, 1);
  double s = 0.0;
  for (double v : x.data()) s += v;
  out.data()[0] = s;
  Tensor xc = x;
  t.record(out, [xc, out]() mutable {
    for (int i = 0; i < xc.size(); ++i) accum(xc, i, out.grad()[0]);
  });
  return out;
}

Tensor softmax_rows(Tape& t, const Tensor& x, const Mask& mask) {
  if (!mask.empty() && static_cast<int>(mask.size()) != x.size()) {
    throw std::invalid_argument("softmax_rows: mask size " +
                                std::to_string(mask.size()) + " for tensor " +
                                shape_str(x));
  }
  const int m = x.rows(), n = x.cols();
  Tensor out = make_output(m, n);
  for (int i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (mask.empty() || mask[i * n + j]) mx = std::max(mx, x.at(i, j));
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("softmax_rows: row " + std::to_string(i) +
                                  " is fully masked");
    }
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      if (mask.empty() || mask[i * n + j]) {
        out.at(i, j) = std::exp(x.at(i, j) - mx);
        denom += out.at(i, j);
      }
    }
    for (int j = 0; j < n; ++j) out.at(i, j) /= denom;
  }
  Tensor xc = x;
  t.record(out, [xc, out]() mutable {
    const int m = xc.rows(), n = xc.cols();
    if (!xc.requires_grad()) return;
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += out.grad()[i * n + j] * out.data()[i * n + j];
      for (int j = 0; j < n; ++j) {
        const double y = out.data()[i * n + j];
        xc.grad()[i * n + j] += y * (out.grad()[i * n + j] - dot);
      }
    }
  });
  return out;
}

Tensor layer_norm_rows(Tape& t, const Tensor& x, const Tensor& gamma,
                       const Tensor& beta, double eps) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 ||
      beta.cols() != x.cols()) {
    throw std::invalid_argument("layer_norm_rows: gamma/beta must be 1x" +
                                std::to_string(x.cols()));
  }
  const int m = x.rows(), n = x.cols();
  Tensor out = make_output(m, n);
  // xhat cached for backward
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += x.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    for (int j = 0; j < n; ++j) {
      const double xh = (x.at(i, j) - mean) * inv;
      (*xhat)[i * n + j] = xh;
      out.at(i, j) = gamma.at(0, j) * xh + beta.at(0, j);
    }
  }
  Tensor xc = x, gc = gamma, bc = beta;
  t.record(out, [xc, gc, bc, out, xhat, inv_std]() mutable {
    const int m = xc.rows(), n = xc.cols();
    for (int i = 0; i < m; ++i) {
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (int j = 0; j < n; ++j) {
        const double g = out.grad()[i * n + j];
        const double xh = (*xhat)[i * n + j];
        accum(gc, j, g * xh);
        accum(bc, j, g);
        const double dxhat = g * gc.data()[j];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xh;
      }
      mean_dxhat /= n;
      mean_dxhat_xhat /= n;
      if (xc.requires_grad()) {
        for (int j = 0; j < n; ++j) {
          const double dxhat = out.grad()[i * n + j] * gc.data()[j];
          const double xh = (*xhat)[i * n + j];
          xc.grad()[i * n + j] +=
              (*inv_std)[i] * (dxhat - mean_dxhat - xh * mean_dxhat_xhat);
        }
      }
    }
  });
  return out;
}

Tensor cross_entropy_from_logits(Tape& t, const Tensor& logits,
                                 const std::vector<int>& targets,
                                 const Mask& target_mask) {
  const int B = logits.rows(), V = logits.cols();
  if (static_cast<int>(targets.size()) != B) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(B) + " rows");
  }
  if (!target_mask.empty() && static_cast<int>(target_mask.size()) != B) {
    throw std::invalid_argument("cross_entropy: target_mask size mismatch");
  }
  int active = 0;
  for (int i = 0; i < B; ++i) {
    const bool on = target_mask.empty() || target_mask[i];
    if (!on) continue;
    ++active;
    if (targets[i] < 0 || targets[i] >= V) {
      throw std::invalid_argument("cross_entropy: target " +
                                  std::to_string(targets[i]) + " out of [0," +
                                  std::to_string(V) + ") at row " + std::to_string(i));
    }
  }
  if (active == 0) throw std::invalid_argument("cross_entropy: all rows masked");

  Tensor out = make_output(1, 1);
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(B) * V, 0.0);
  double total = 0.0;
  for (int i = 0; i < B; ++i) {
    const bool on = target_mask.empty() || target_mask[i];
    if (!on) continue;
    double mx = logits.at(i, 0);
    for (int j = 1; j < V; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < V; ++j) {
      (*probs)[i * V + j] = std::exp(logits.at(i, j) - mx);
      denom += (*probs)[i * V + j];
    }
    for (int j = 0; j < V; ++j) (*probs)[i * V + j] /= denom;
    total += -std::log((*probs)[i * V + targets[i]]);
  }
  out.data()[0] = total / active;

  Tensor lc = logits;
  auto tg = targets;
  auto tm = target_mask;
  t.record(out, [lc, out, probs, tg, tm, active]() mutable {
    if (!lc.requires_grad()) return;
    const int B = lc.rows(), V = lc.cols();
    const double g = out.grad()[0] / active;
    for (int i = 0; i < B; ++i) {
      const bool on = tm.empty() || tm[i];
      if (!on) continue;
      for (int j = 0; j < V; ++j) {
        double d = (*probs)[i * V + j];
        if (j == tg[i]) d -= 1.0;
        lc.grad()[i * V + j] += g * d;
      }
    }
  });
  return out;
}

Tensor binary_cross_entropy(Tape& t, const Tensor& p, const std::vector<int>& y) {
  const int N = p.size();
  if (static_cast<int>(y.size()) != N) {
    throw std::invalid_argument("binary_cross_entropy: " + std::to_string(y.size()) +
                                " labels for " + std::to_string(N) + " probabilities");
  }
  constexpr double kLo = 1e-7, kHi = 1.0 - 1e-7;
  Tensor out = make_output(1, 1);
  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    const double c = std::clamp(p.data()[i], kLo, kHi);
    total += y[i] ? -std::log(c) : -std::log(1.0 - c);
  }
  out.data()[0] = total / N;
  Tensor pc = p;
  auto yc = y;
  t.record(out, [pc, out, yc]() mutable {
    if (!pc.requires_grad()) return;
    const int N = pc.size();
    const double g = out.grad()[0] / N;
    for (int i = 0; i < N; ++i) {
      const double raw = pc.data()[i];
      if (raw <= kLo || raw >= kHi) continue;  // clamped, derivative 0
      pc.grad()[i] += g * (raw - (yc[i] ? 1.0 : 0.0)) / (raw * (1.0 - raw));
    }
  });
  return out;
}

Tensor embedding_lookup(Tape& t, const Tensor& table, const std::vector<int>& ids) {
  if (ids.empty()) throw std::invalid_argument("embedding_lookup: empty id list");
  const int V = table.rows(), d = table.cols();
  for (int id : ids) {
    if (id < 0 || id >= V) {
      throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                  " out of [0," + std::to_string(V) + ")");
    }
  }
  Tensor out = make_output(static_cast<int>(ids.size()), d);
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = table.at(ids[i], j);
  Tensor tc = table;
  auto idc = ids;
  t.record(out, [tc, out, idc]() mutable {
    if (!tc.requires_grad()) return;
    const int d = tc.cols();
    for (size_t i = 0; i < idc.size(); ++i)
      for (int j = 0; j < d; ++j)
        tc.grad()[idc[i] * d + j] += out.grad()[i * d + j];
  });
  return out;
}

Tensor concat_rows(Tape& t, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int n = parts[0].cols();
  int m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) throw std::invalid_argument("concat_rows: column mismatch");
    m += p.rows();
  }
  Tensor out = make_output(m, n);
  int r = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + r * n);
    r += p.rows();
  }
  auto pc = parts;
  t.record(out, [pc, out]() mutable {
    const int n = out.cols();
    int r = 0;
    for (auto& p : pc) {
      if (p.requires_grad()) {
        for (int i = 0; i < p.size(); ++i) p.grad()[i] += out.grad()[r * n + i];
      }
      r += p.rows();
    }
  });
  return out;
}

Tensor concat_cols(Tape& t, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int m = parts[0].rows();
  int n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
    n += p.cols();
  }
  Tensor out = make_output(m, n);
  int c = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p.cols(); ++j) out.at(i, c + j) = p.at(i, j);
    c += p.cols();
  }
  auto pc = parts;
  t.record(out, [pc, out]() mutable {
    const int m = out.rows();
    int c = 0;
    for (auto& p : pc) {
      if (p.requires_grad()) {
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < p.cols(); ++j)
            p.grad()[i * p.cols() + j] += out.grad()[i * out.cols() + c + j];
      }
      c += p.cols();
    }
  });
  return out;
}

Tensor mean_rows_masked(Tape& t, const Tensor& x, const Mask& row_mask) {
  if (!row_mask.empty() && static_cast<int>(row_mask.size()) != x.rows()) {
    throw std::invalid_argument("mean_rows_masked: mask length " +
                                std::to_string(row_mask.size()) + " for " +
                                std::to_string(x.rows()) + " rows");
  }
  int count = 0;
  for (int i = 0; i < x.rows(); ++i)
    if (row_mask.empty() || row_mask[i]) ++count;
  if (count == 0) throw std::invalid_argument("mean_rows_masked: all rows masked");

  Tensor out = make_output(1, x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    if (!row_mask.empty() && !row_mask[i]) continue;
    for (int j = 0; j < x.cols(); ++j) out.at(0, j) += x.at(i, j);
  }
  for (int j = 0; j < x.cols(); ++j) out.at(0, j) /= count;
  Tensor xc = x;
  auto mc = row_mask;
  t.record(out, [xc, out, mc, count]() mutable {
    if (!xc.requires_grad()) return;
    for (int i = 0; i < xc.rows(); ++i) {
      if (!mc.empty() && !mc[i]) continue;
      for (int j = 0; j < xc.cols(); ++j)
        xc.grad()[i * xc.cols() + j] += out.grad()[j] / count;
    }
  });
  return out;
}

void AdamState::init(const std::vector<Tensor>& params) {
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.size(), 0.0);
    v.emplace_back(p.size(), 0.0);
  }
  step_count = 0;
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state holds " +
                                std::to_string(state.m.size()) + " slots for " +
                                std::to_string(params.size()) + " params");
  }
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step_count);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step_count);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (static_cast<int>(state.m[i].size()) != p.size()) {
      throw std::invalid_argument("adam_step: shape mismatch at param " +
                                  std::to_string(i));
    }
    for (int j = 0; j < p.size(); ++j) {
      const double g = p.grad()[j];
      state.m[i][j] = state.beta1 * state.m[i][j] + (1.0 - state.beta1) * g;
      state.v[i][j] = state.beta2 * state.v[i][j] + (1.0 - state.beta2) * g * g;
      const double mhat = state.m[i][j] / bc1;
      const double vhat = state.v[i][j] / bc2;
      p.data()[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double h) {
  Tensor g = Tensor::zeros(x.rows(), x.cols());
  Tensor probe = Tensor::from(x.rows(), x.cols(), x.data());
  for (int i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double fp = f(probe);
    probe.data()[i] = orig - h;
    const double fm = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace s2s
