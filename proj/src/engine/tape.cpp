#include "trajview/engine/tape.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>

namespace trajview::engine {

namespace {

void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  // c (m,n) += a (m,k) * b (k,n), ikj order so the inner loop streams.
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  // c (m,n) += a (m,k) * b(n,k)^T; dot products over k.
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  // c (m,n) += a(k,m)^T * b (k,n).
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<size_t>(p) * m;
    const double* bp = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

}  // namespace

Var Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) { return push(std::move(value), true, nullptr); }

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.rows(), n.value.cols());
    n.grad_alloc = true;
  }
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad_alloc) return n.grad;
  return Tensor(n.value.rows(), n.value.cols());
}

void Tape::backward(Var root) {
  if (!root.valid()) throw std::invalid_argument("backward: invalid root");
  Node& r = nodes_[root.id];
  if (r.value.numel() != 1) throw std::invalid_argument("backward: root must be scalar, got " + r.value.shape_str());
  grad_buf(root.id)[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad_alloc && n.backprop) n.backprop(*this);
  }
}

void Tape::clear() { nodes_.clear(); }

void Tape::check_same_shape(Var a, Var b, const char* op) const {
  if (!nodes_[a.id].value.same_shape(nodes_[b.id].value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + nodes_[a.id].value.shape_str() + " vs " +
                                nodes_[b.id].value.shape_str());
}

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out = value(a);
  const Tensor& vb = value(b);
  for (size_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
  bool ng = wants(a.id) || wants(b.id);
  Var o{};
  o = push(std::move(out), ng, [a, b, id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    if (t.wants(a.id)) {
      Tensor& ga = t.grad_buf(a.id);
      for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (t.wants(b.id)) {
      Tensor& gb = t.grad_buf(b.id);
      for (size_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
    }
  });
  return o;
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tensor out = value(a);
  const Tensor& vb = value(b);
  for (size_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
  bool ng = wants(a.id) || wants(b.id);
  return push(std::move(out), ng, [a, b, id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    if (t.wants(a.id)) {
      Tensor& ga = t.grad_buf(a.id);
      for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (t.wants(b.id)) {
      Tensor& gb = t.grad_buf(b.id);
      for (size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out = value(a);
  const Tensor& vb = value(b);
  for (size_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
  bool ng = wants(a.id) || wants(b.id);
  return push(std::move(out), ng, [a, b, id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& va = t.value(a);
    const Tensor& vb2 = t.value(b);
    if (t.wants(a.id)) {
      Tensor& ga = t.grad_buf(a.id);
      for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb2[i];
    }
    if (t.wants(b.id)) {
      Tensor& gb = t.grad_buf(b.id);
      for (size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = value(a);
  for (size_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return push(std::move(out), wants(a.id), [a, c, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(a.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    Tensor& ga = t.grad_buf(a.id);
    for (size_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
  });
}

Var Tape::add_rowvec(Var x, Var b) {
  const Tensor& vx = value(x);
  const Tensor& vb = value(b);
  if (vb.rows() != 1 || vb.cols() != vx.cols())
    throw std::invalid_argument("add_rowvec: shapes " + vx.shape_str() + " vs " + vb.shape_str());
  Tensor out = vx;
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out.at(r, c) += vb[c];
  bool ng = wants(x.id) || wants(b.id);
  return push(std::move(out), ng, [x, b, id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    if (t.wants(x.id)) {
      Tensor& gx = t.grad_buf(x.id);
      for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
    }
    if (t.wants(b.id)) {
      Tensor& gb = t.grad_buf(b.id);
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
    }
  });
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.cols() != vb.rows())
    throw std::invalid_argument("matmul: inner dims " + va.shape_str() + " x " + vb.shape_str());
  Tensor out(va.rows(), vb.cols());
  matmul_acc(va.data(), vb.data(), out.data(), va.rows(), va.cols(), vb.cols());
  bool ng = wants(a.id) || wants(b.id);
  return push(std::move(out), ng, [a, b, id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& va2 = t.value(a);
    const Tensor& vb2 = t.value(b);
    if (t.wants(a.id))  // ga += g * b^T
      matmul_nt_acc(g.data(), vb2.data(), t.grad_buf(a.id).data(), g.rows(), g.cols(), vb2.rows());
    if (t.wants(b.id))  // gb += a^T * g
      matmul_tn_acc(va2.data(), g.data(), t.grad_buf(b.id).data(), va2.cols(), va2.rows(), g.cols());
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (va.cols() != vb.cols())
    throw std::invalid_argument("matmul_nt: inner dims " + va.shape_str() + " x " + vb.shape_str() + "^T");
  Tensor out(va.rows(), vb.rows());
  matmul_nt_acc(va.data(), vb.data(), out.data(), va.rows(), va.cols(), vb.rows());
  bool ng = wants(a.id) || wants(b.id);
  return push(std::move(out), ng, [a, b, id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;  // (m,n)
    const Tensor& va2 = t.value(a);       // (m,k)
    const Tensor& vb2 = t.value(b);       // (n,k)
    if (t.wants(a.id))  // ga += g * b
      matmul_acc(g.data(), vb2.data(), t.grad_buf(a.id).data(), g.rows(), g.cols(), vb2.cols());
    if (t.wants(b.id))  // gb += g^T * a
      matmul_tn_acc(g.data(), va2.data(), t.grad_buf(b.id).data(), g.cols(), g.rows(), va2.cols());
  });
}

// ---------------------------------------------------------------------------
// nonlinearities
// ---------------------------------------------------------------------------

Var Tape::relu(Var x) {
  Tensor out = value(x);
  for (size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return push(std::move(out), wants(x.id), [x, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& vx = t.value(x);
    Tensor& gx = t.grad_buf(x.id);
    for (size_t i = 0; i < g.numel(); ++i) gx[i] += vx[i] > 0.0 ? g[i] : 0.0;
  });
}

Var Tape::leaky_relu(Var x, double slope) {
  Tensor out = value(x);
  for (size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : slope * out[i];
  return push(std::move(out), wants(x.id), [x, slope, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& vx = t.value(x);
    Tensor& gx = t.grad_buf(x.id);
    for (size_t i = 0; i < g.numel(); ++i) gx[i] += vx[i] > 0.0 ? g[i] : slope * g[i];
  });
}

Var Tape::elu(Var x) {
  Tensor out = value(x);
  for (size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : std::expm1(out[i]);
  return push(std::move(out), wants(x.id), [x, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& vx = t.value(x);
    const Tensor& vy = t.nodes_[id].value;
    Tensor& gx = t.grad_buf(x.id);
    for (size_t i = 0; i < g.numel(); ++i) gx[i] += vx[i] > 0.0 ? g[i] : g[i] * (vy[i] + 1.0);
  });
}

Var Tape::sigmoid(Var x) {
  Tensor out = value(x);
  for (size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return push(std::move(out), wants(x.id), [x, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& vy = t.nodes_[id].value;
    Tensor& gx = t.grad_buf(x.id);
    for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * vy[i] * (1.0 - vy[i]);
  });
}

Var Tape::tanh_(Var x) {
  Tensor out = value(x);
  for (size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  return push(std::move(out), wants(x.id), [x, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& vy = t.nodes_[id].value;
    Tensor& gx = t.grad_buf(x.id);
    for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (1.0 - vy[i] * vy[i]);
  });
}

// ---------------------------------------------------------------------------
// softmax / normalization
// ---------------------------------------------------------------------------

Var Tape::softmax_rows(Var x) {
  Tensor out = value(x);
  for (int r = 0; r < out.rows(); ++r) {
    double mx = out.at(r, 0);
    for (int c = 1; c < out.cols(); ++c) mx = std::max(mx, out.at(r, c));
    double z = 0.0;
    for (int c = 0; c < out.cols(); ++c) {
      out.at(r, c) = std::exp(out.at(r, c) - mx);
      z += out.at(r, c);
    }
    for (int c = 0; c < out.cols(); ++c) out.at(r, c) /= z;
  }
  return push(std::move(out), wants(x.id), [x, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& p = t.nodes_[id].value;
    Tensor& gx = t.grad_buf(x.id);
    for (int r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (int c = 0; c < g.cols(); ++c) dot += g.at(r, c) * p.at(r, c);
      for (int c = 0; c < g.cols(); ++c) gx.at(r, c) += p.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

Var Tape::masked_softmax_rows(Var x, const Tensor& mask) {
  const Tensor& vx = value(x);
  if (!vx.same_shape(mask))
    throw std::invalid_argument("masked_softmax_rows: mask shape " + mask.shape_str() + " vs " + vx.shape_str());
  Tensor out(vx.rows(), vx.cols());
  for (int r = 0; r < vx.rows(); ++r) {
    double mx = -1e300;
    int enabled = 0;
    for (int c = 0; c < vx.cols(); ++c)
      if (mask.at(r, c) != 0.0) {
        mx = std::max(mx, vx.at(r, c));
        ++enabled;
      }
    if (enabled == 0)
      throw std::invalid_argument("masked_softmax_rows: row " + std::to_string(r) + " has no enabled entries");
    double z = 0.0;
    for (int c = 0; c < vx.cols(); ++c) {
      if (mask.at(r, c) != 0.0) {
        out.at(r, c) = std::exp(vx.at(r, c) - mx);
        z += out.at(r, c);
      }
    }
    for (int c = 0; c < vx.cols(); ++c)
      if (mask.at(r, c) != 0.0) out.at(r, c) /= z;
  }
  return push(std::move(out), wants(x.id), [x, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& p = t.nodes_[id].value;  // zeros at masked-out entries
    Tensor& gx = t.grad_buf(x.id);
    for (int r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (int c = 0; c < g.cols(); ++c) dot += g.at(r, c) * p.at(r, c);
      for (int c = 0; c < g.cols(); ++c) gx.at(r, c) += p.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& vx = value(x);
  const Tensor& vg = value(gain);
  const Tensor& vb = value(bias);
  if (vg.rows() != 1 || vg.cols() != vx.cols() || vb.rows() != 1 || vb.cols() != vx.cols())
    throw std::invalid_argument("layer_norm: affine shapes " + vg.shape_str() + "," + vb.shape_str() + " for x " +
                                vx.shape_str());
  const int d = vx.cols();
  Tensor out(vx.rows(), d);
  for (int r = 0; r < vx.rows(); ++r) {
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += vx.at(r, c);
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) {
      const double dv = vx.at(r, c) - mean;
      var += dv * dv;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < d; ++c) out.at(r, c) = (vx.at(r, c) - mean) * inv * vg[c] + vb[c];
  }
  bool ng = wants(x.id) || wants(gain.id) || wants(bias.id);
  return push(std::move(out), ng, [x, gain, bias, eps, id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& vx2 = t.value(x);
    const Tensor& vg2 = t.value(gain);
    const int d = vx2.cols();
    for (int r = 0; r < vx2.rows(); ++r) {
      double mean = 0.0;
      for (int c = 0; c < d; ++c) mean += vx2.at(r, c);
      mean /= d;
      double var = 0.0;
      for (int c = 0; c < d; ++c) {
        const double dv = vx2.at(r, c) - mean;
        var += dv * dv;
      }
      var /= d;
      const double inv = 1.0 / std::sqrt(var + eps);
      // xhat and the two row reductions of ghat = g * gain
      double sum_gh = 0.0, sum_gh_xh = 0.0;
      for (int c = 0; c < d; ++c) {
        const double xh = (vx2.at(r, c) - mean) * inv;
        const double gh = g.at(r, c) * vg2[c];
        sum_gh += gh;
        sum_gh_xh += gh * xh;
      }
      if (t.wants(x.id)) {
        Tensor& gx = t.grad_buf(x.id);
        for (int c = 0; c < d; ++c) {
          const double xh = (vx2.at(r, c) - mean) * inv;
          const double gh = g.at(r, c) * vg2[c];
          gx.at(r, c) += inv * (gh - sum_gh / d - xh * sum_gh_xh / d);
        }
      }
      if (t.wants(gain.id)) {
        Tensor& gg = t.grad_buf(gain.id);
        for (int c = 0; c < d; ++c) gg[c] += g.at(r, c) * (vx2.at(r, c) - mean) * inv;
      }
      if (t.wants(bias.id)) {
        Tensor& gb = t.grad_buf(bias.id);
        for (int c = 0; c < d; ++c) gb[c] += g.at(r, c);
      }
    }
  });
}

Var Tape::normalize_rows(Var x) {
  constexpr double kFloor = 1e-12;
  const Tensor& vx = value(x);
  Tensor out(vx.rows(), vx.cols());
  for (int r = 0; r < vx.rows(); ++r) {
    double nrm = 0.0;
    for (int c = 0; c < vx.cols(); ++c) nrm += vx.at(r, c) * vx.at(r, c);
    nrm = std::sqrt(nrm);
    const double denom = nrm + kFloor;
    for (int c = 0; c < vx.cols(); ++c) out.at(r, c) = vx.at(r, c) / denom;
  }
  return push(std::move(out), wants(x.id), [x, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& vx2 = t.value(x);
    Tensor& gx = t.grad_buf(x.id);
    for (int r = 0; r < g.rows(); ++r) {
      double nrm = 0.0, dot = 0.0;
      for (int c = 0; c < g.cols(); ++c) nrm += vx2.at(r, c) * vx2.at(r, c);
      nrm = std::sqrt(nrm);
      const double denom = nrm + kFloor;
      for (int c = 0; c < g.cols(); ++c) dot += g.at(r, c) * vx2.at(r, c);
      // y = x / (|x| + f); dy/dx = I/(|x|+f) - x x^T / (|x| (|x|+f)^2)
      const double coef = nrm > 0.0 ? dot / (nrm * denom * denom) : 0.0;
      for (int c = 0; c < g.cols(); ++c) gx.at(r, c) += g.at(r, c) / denom - vx2.at(r, c) * coef;
    }
  });
}

Var Tape::softmax_xent_rows(Var logits, const std::vector<int>& targets) {
  const Tensor& vl = value(logits);
  if (static_cast<int>(targets.size()) != vl.rows())
    throw std::invalid_argument("softmax_xent_rows: " + std::to_string(targets.size()) + " targets for " +
                                vl.shape_str());
  const int n = vl.rows();
  const int v = vl.cols();
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    if (targets[r] < 0 || targets[r] >= v) throw std::invalid_argument("softmax_xent_rows: target out of range");
    double mx = vl.at(r, 0);
    for (int c = 1; c < v; ++c) mx = std::max(mx, vl.at(r, c));
    double z = 0.0;
    for (int c = 0; c < v; ++c) z += std::exp(vl.at(r, c) - mx);
    total += std::log(z) - (vl.at(r, targets[r]) - mx);
  }
  Tensor out = Tensor::scalar(total / n);
  return push(std::move(out), wants(logits.id),
              [logits, targets, id = static_cast<int>(nodes_.size())](Tape& t) {
                if (!t.wants(logits.id)) return;
                const double gs = t.nodes_[id].grad[0];
                const Tensor& vl2 = t.value(logits);
                Tensor& gx = t.grad_buf(logits.id);
                const int n2 = vl2.rows();
                const int v2 = vl2.cols();
                for (int r = 0; r < n2; ++r) {
                  double mx = vl2.at(r, 0);
                  for (int c = 1; c < v2; ++c) mx = std::max(mx, vl2.at(r, c));
                  double z = 0.0;
                  for (int c = 0; c < v2; ++c) z += std::exp(vl2.at(r, c) - mx);
                  for (int c = 0; c < v2; ++c) {
                    const double p = std::exp(vl2.at(r, c) - mx) / z;
                    gx.at(r, c) += gs * (p - (c == targets[r] ? 1.0 : 0.0)) / n2;
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int cols = value(parts[0]).cols();
  int rows = 0;
  bool ng = false;
  for (Var p : parts) {
    if (value(p).cols() != cols)
      throw std::invalid_argument("concat_rows: column mismatch " + value(p).shape_str());
    rows += value(p).rows();
    ng = ng || wants(p.id);
  }
  Tensor out(rows, cols);
  int r0 = 0;
  for (Var p : parts) {
    const Tensor& vp = value(p);
    std::memcpy(out.data() + static_cast<size_t>(r0) * cols, vp.data(), vp.numel() * sizeof(double));
    r0 += vp.rows();
  }
  std::vector<Var> own(parts.begin(), parts.end());
  return push(std::move(out), ng, [own = std::move(own), id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    int r0 = 0;
    for (Var p : own) {
      const int pr = t.value(p).rows();
      if (t.wants(p.id)) {
        Tensor& gp = t.grad_buf(p.id);
        for (int r = 0; r < pr; ++r)
          for (int c = 0; c < g.cols(); ++c) gp.at(r, c) += g.at(r0 + r, c);
      }
      r0 += pr;
    }
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int rows = value(parts[0]).rows();
  int cols = 0;
  bool ng = false;
  for (Var p : parts) {
    if (value(p).rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch " + value(p).shape_str());
    cols += value(p).cols();
    ng = ng || wants(p.id);
  }
  Tensor out(rows, cols);
  int c0 = 0;
  for (Var p : parts) {
    const Tensor& vp = value(p);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < vp.cols(); ++c) out.at(r, c0 + c) = vp.at(r, c);
    c0 += vp.cols();
  }
  std::vector<Var> own(parts.begin(), parts.end());
  return push(std::move(out), ng, [own = std::move(own), id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    int c0 = 0;
    for (Var p : own) {
      const int pc = t.value(p).cols();
      if (t.wants(p.id)) {
        Tensor& gp = t.grad_buf(p.id);
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < pc; ++c) gp.at(r, c) += g.at(r, c0 + c);
      }
      c0 += pc;
    }
  });
}

Var Tape::slice_rows(Var x, int row0, int nrows) {
  const Tensor& vx = value(x);
  if (row0 < 0 || nrows < 0 || row0 + nrows > vx.rows())
    throw std::invalid_argument("slice_rows: [" + std::to_string(row0) + "," + std::to_string(row0 + nrows) +
                                ") of " + vx.shape_str());
  Tensor out(nrows, vx.cols());
  std::memcpy(out.data(), vx.data() + static_cast<size_t>(row0) * vx.cols(), out.numel() * sizeof(double));
  return push(std::move(out), wants(x.id), [x, row0, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    Tensor& gx = t.grad_buf(x.id);
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c) gx.at(row0 + r, c) += g.at(r, c);
  });
}

Var Tape::slice_cols(Var x, int col0, int ncols) {
  const Tensor& vx = value(x);
  if (col0 < 0 || ncols < 0 || col0 + ncols > vx.cols())
    throw std::invalid_argument("slice_cols: [" + std::to_string(col0) + "," + std::to_string(col0 + ncols) +
                                ") of " + vx.shape_str());
  Tensor out(vx.rows(), ncols);
  for (int r = 0; r < vx.rows(); ++r)
    for (int c = 0; c < ncols; ++c) out.at(r, c) = vx.at(r, col0 + c);
  return push(std::move(out), wants(x.id), [x, col0, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    Tensor& gx = t.grad_buf(x.id);
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c) gx.at(r, col0 + c) += g.at(r, c);
  });
}

Var Tape::mean_rows(Var x) {
  const Tensor& vx = value(x);
  if (vx.rows() < 1) throw std::invalid_argument("mean_rows: empty input");
  Tensor out(1, vx.cols());
  for (int r = 0; r < vx.rows(); ++r)
    for (int c = 0; c < vx.cols(); ++c) out[c] += vx.at(r, c);
  for (int c = 0; c < vx.cols(); ++c) out[c] /= vx.rows();
  return push(std::move(out), wants(x.id), [x, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const Tensor& g = t.nodes_[id].grad;
    const int rows = t.value(x).rows();
    Tensor& gx = t.grad_buf(x.id);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < g.cols(); ++c) gx.at(r, c) += g[c] / rows;
  });
}

Var Tape::gather_rows(Var x, std::vector<int> ids) {
  const Tensor& vx = value(x);
  Tensor out(static_cast<int>(ids.size()), vx.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vx.rows())
      throw std::invalid_argument("gather_rows: id " + std::to_string(ids[i]) + " outside " + vx.shape_str());
    std::memcpy(out.data() + i * vx.cols(), vx.data() + static_cast<size_t>(ids[i]) * vx.cols(),
                static_cast<size_t>(vx.cols()) * sizeof(double));
  }
  return push(std::move(out), wants(x.id),
              [x, ids = std::move(ids), id = static_cast<int>(nodes_.size())](Tape& t) {
                if (!t.wants(x.id)) return;
                const Tensor& g = t.nodes_[id].grad;
                Tensor& gx = t.grad_buf(x.id);
                for (size_t i = 0; i < ids.size(); ++i)
                  for (int c = 0; c < g.cols(); ++c) gx.at(ids[i], c) += g.at(static_cast<int>(i), c);
              });
}

Var Tape::outer_sum(Var p, Var q) {
  const Tensor& vp = value(p);
  const Tensor& vq = value(q);
  if (vp.cols() != 1 || vq.cols() != 1)
    throw std::invalid_argument("outer_sum: need column vectors, got " + vp.shape_str() + "," + vq.shape_str());
  Tensor out(vp.rows(), vq.rows());
  for (int r = 0; r < vp.rows(); ++r)
    for (int c = 0; c < vq.rows(); ++c) out.at(r, c) = vp[r] + vq[c];
  bool ng = wants(p.id) || wants(q.id);
  return push(std::move(out), ng, [p, q, id = static_cast<int>(nodes_.size())](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    if (t.wants(p.id)) {
      Tensor& gp = t.grad_buf(p.id);
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) gp[r] += g.at(r, c);
    }
    if (t.wants(q.id)) {
      Tensor& gq = t.grad_buf(q.id);
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) gq[c] += g.at(r, c);
    }
  });
}

Var Tape::linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

Var Tape::mean_all(Var x) {
  const Tensor& vx = value(x);
  if (vx.numel() == 0) throw std::invalid_argument("mean_all: empty input");
  double s = 0.0;
  for (size_t i = 0; i < vx.numel(); ++i) s += vx[i];
  Tensor out = Tensor::scalar(s / vx.numel());
  return push(std::move(out), wants(x.id), [x, id = static_cast<int>(nodes_.size())](Tape& t) {
    if (!t.wants(x.id)) return;
    const double gs = t.nodes_[id].grad[0];
    Tensor& gx = t.grad_buf(x.id);
    const double inv = 1.0 / gx.numel();
    for (size_t i = 0; i < gx.numel(); ++i) gx[i] += gs * inv;
  });
}

Var Tape::gru_cell_fused(Var x, Var h, Var wx, Var u_zr, Var u_n, Var b_zr, Var b_n, int hidden) {
  const Tensor& vx = value(x);
  const Tensor& vh = value(h);
  const int in = vx.cols();
  const int hd = hidden;
  if (vx.rows() != 1 || vh.rows() != 1 || vh.cols() != hd)
    throw std::invalid_argument("gru_cell_fused: expected row vectors, got x " + vx.shape_str() + " h " +
                                vh.shape_str());
  if (value(wx).rows() != in || value(wx).cols() != 3 * hd || value(u_zr).rows() != hd ||
      value(u_zr).cols() != 2 * hd || value(u_n).rows() != hd || value(u_n).cols() != hd ||
      value(b_zr).cols() != 2 * hd || value(b_n).cols() != hd)
    throw std::invalid_argument("gru_cell_fused: parameter shape mismatch for hidden=" + std::to_string(hd));

  const Tensor& mwx = value(wx);
  const Tensor& muzr = value(u_zr);
  const Tensor& mun = value(u_n);
  const Tensor& vbzr = value(b_zr);
  const Tensor& vbn = value(b_n);

  // cache z|r|n for the backward pass
  auto gates = std::make_shared<Tensor>(1, 3 * hd);
  Tensor pre(1, 3 * hd);
  for (int c = 0; c < 3 * hd; ++c) {
    double s = 0.0;
    for (int k = 0; k < in; ++k) s += vx[k] * mwx.at(k, c);
    pre[c] = s;
  }
  for (int c = 0; c < 2 * hd; ++c) {
    double s = pre[c] + vbzr[c];
    for (int k = 0; k < hd; ++k) s += vh[k] * muzr.at(k, c);
    (*gates)[c] = 1.0 / (1.0 + std::exp(-s));
  }
  Tensor out(1, hd);
  for (int c = 0; c < hd; ++c) {
    double s = pre[2 * hd + c] + vbn[c];
    for (int k = 0; k < hd; ++k) s += (*gates)[hd + k] * vh[k] * mun.at(k, c);
    const double n = std::tanh(s);
    (*gates)[2 * hd + c] = n;
    out[c] = vh[c] + (*gates)[c] * (n - vh[c]);
  }

  bool ng = wants(x.id) || wants(h.id) || wants(wx.id) || wants(u_zr.id) || wants(u_n.id) ||
            wants(b_zr.id) || wants(b_n.id);
  return push(std::move(out), ng,
              [x, h, wx, u_zr, u_n, b_zr, b_n, hd, gates, id = static_cast<int>(nodes_.size())](Tape& t) {
                const Tensor& g = t.nodes_[id].grad;
                const Tensor& vx2 = t.value(x);
                const Tensor& vh2 = t.value(h);
                const Tensor& mwx2 = t.value(wx);
                const Tensor& muzr2 = t.value(u_zr);
                const Tensor& mun2 = t.value(u_n);
                const int in2 = vx2.cols();
                const double* z = gates->data();
                const double* r = gates->data() + hd;
                const double* n = gates->data() + 2 * hd;

                std::vector<double> dpre(3 * hd);  // [dz_pre | dr_pre | dn_pre]
                std::vector<double> dh(hd, 0.0), drh(hd);
                for (int c = 0; c < hd; ++c) {
                  const double gc = g[c];
                  const double dz = gc * (n[c] - vh2[c]);
                  const double dn = gc * z[c];
                  dh[c] += gc * (1.0 - z[c]);
                  dpre[2 * hd + c] = dn * (1.0 - n[c] * n[c]);
                  dpre[c] = dz * z[c] * (1.0 - z[c]);  // dr_pre filled below
                }
                // d(rh) = dn_pre @ U_n^T
                for (int k = 0; k < hd; ++k) {
                  double s = 0.0;
                  for (int c = 0; c < hd; ++c) s += dpre[2 * hd + c] * mun2.at(k, c);
                  drh[k] = s;
                }
                for (int k = 0; k < hd; ++k) {
                  dh[k] += drh[k] * r[k];
                  const double dr = drh[k] * vh2[k];
                  dpre[hd + k] = dr * r[k] * (1.0 - r[k]);
                }
                // dh += dzr_pre @ U_zr^T
                for (int k = 0; k < hd; ++k) {
                  double s = 0.0;
                  for (int c = 0; c < 2 * hd; ++c) s += dpre[c] * muzr2.at(k, c);
                  dh[k] += s;
                }

                if (t.wants(h.id)) {
                  Tensor& gh = t.grad_buf(h.id);
                  for (int k = 0; k < hd; ++k) gh[k] += dh[k];
                }
                if (t.wants(x.id)) {
                  Tensor& gx = t.grad_buf(x.id);
                  for (int k = 0; k < in2; ++k) {
                    double s = 0.0;
                    const double* row = mwx2.data() + static_cast<size_t>(k) * 3 * hd;
                    for (int c = 0; c < 3 * hd; ++c) s += dpre[c] * row[c];
                    gx[k] += s;
                  }
                }
                if (t.wants(wx.id)) {
                  Tensor& gw = t.grad_buf(wx.id);
                  for (int k = 0; k < in2; ++k) {
                    const double xk = vx2[k];
                    if (xk == 0.0) continue;
                    double* row = gw.data() + static_cast<size_t>(k) * 3 * hd;
                    for (int c = 0; c < 3 * hd; ++c) row[c] += xk * dpre[c];
                  }
                }
                if (t.wants(u_zr.id)) {
                  Tensor& gu = t.grad_buf(u_zr.id);
                  for (int k = 0; k < hd; ++k) {
                    const double hk = vh2[k];
                    if (hk == 0.0) continue;
                    double* row = gu.data() + static_cast<size_t>(k) * 2 * hd;
                    for (int c = 0; c < 2 * hd; ++c) row[c] += hk * dpre[c];
                  }
                }
                if (t.wants(u_n.id)) {
                  Tensor& gu = t.grad_buf(u_n.id);
                  for (int k = 0; k < hd; ++k) {
                    const double rhk = r[k] * vh2[k];
                    if (rhk == 0.0) continue;
                    double* row = gu.data() + static_cast<size_t>(k) * hd;
                    for (int c = 0; c < hd; ++c) row[c] += rhk * dpre[2 * hd + c];
                  }
                }
                if (t.wants(b_zr.id)) {
                  Tensor& gb = t.grad_buf(b_zr.id);
                  for (int c = 0; c < 2 * hd; ++c) gb[c] += dpre[c];
                }
                if (t.wants(b_n.id)) {
                  Tensor& gb = t.grad_buf(b_n.id);
                  for (int c = 0; c < hd; ++c) gb[c] += dpre[2 * hd + c];
                }
              });
}

Tensor sinusoidal_positions(int length, int dim) {
  Tensor pos(length, dim);
  for (int p = 0; p < length; ++p) {
    for (int i = 0; i < dim; i += 2) {
      const double rate = std::pow(10000.0, -static_cast<double>(i) / dim);
      pos.at(p, i) = std::sin(p * rate);
      if (i + 1 < dim) pos.at(p, i + 1) = std::cos(p * rate);
    }
  }
  return pos;
}

}  // namespace trajview::engine
