#include "tcav/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

#include "tcav/errors.hpp"

namespace tcav {
namespace ops {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw InputError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

bool bias_broadcast(const Tensor& a, const Tensor& b) {
  return b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.extent(0);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) {
    Tensor out = a;
    double* o = out.data();
    const double* p = b.data();
    for (int64_t i = 0; i < out.size(); ++i) o[i] += p[i];
    return out;
  }
  if (bias_broadcast(a, b)) {
    Tensor out = a;
    int64_t c = b.extent(0);
    double* o = out.data();
    const double* p = b.data();
    for (int64_t i = 0; i < out.size(); i += c) {
      for (int64_t j = 0; j < c; ++j) o[i + j] += p[j];
    }
    return out;
  }
  shape_error("add", a, b);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_error("mul", a, b);
  Tensor out = a;
  double* o = out.data();
  const double* p = b.data();
  for (int64_t i = 0; i < out.size(); ++i) o[i] *= p[i];
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) shape_error("matmul", a, b);
  int64_t n = a.extent(0), k = a.extent(1), m = b.extent(1);
  Tensor out({n, m});
  const double* ap = a.data();
  const double* bp = b.data();
  double* op = out.data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t kk = 0; kk < k; ++kk) {
      double av = ap[i * k + kk];
      const double* brow = bp + kk * m;
      double* orow = op + i * m;
      for (int64_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

void conv2d_geometry(int64_t h, int64_t w, int64_t kh, int64_t kw, const Conv2dOptions& opt,
                     int64_t& oh, int64_t& ow, int64_t& pad_top, int64_t& pad_left) {
  int64_t s = opt.stride;
  if (opt.padding == Padding::valid) {
    if (h < kh || w < kw) {
      throw InputError("conv2d: input " + std::to_string(h) + "x" + std::to_string(w) +
                       " smaller than kernel with valid padding");
    }
    oh = (h - kh) / s + 1;
    ow = (w - kw) / s + 1;
    pad_top = 0;
    pad_left = 0;
  } else {
    oh = (h + s - 1) / s;
    ow = (w + s - 1) / s;
    int64_t total_h = std::max<int64_t>((oh - 1) * s + kh - h, 0);
    int64_t total_w = std::max<int64_t>((ow - 1) * s + kw - w, 0);
    pad_top = total_h / 2;
    pad_left = total_w / 2;
  }
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Conv2dOptions& opt) {
  if (x.rank() != 4 || kernel.rank() != 4 || x.extent(3) != kernel.extent(2)) {
    shape_error("conv2d", x, kernel);
  }
  if (opt.stride != 1 && opt.stride != 2) {
    throw InputError("conv2d: stride must be 1 or 2, got " + std::to_string(opt.stride));
  }
  int64_t n = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
  int64_t kh = kernel.extent(0), kw = kernel.extent(1), oc = kernel.extent(3);
  int64_t oh, ow, pt, pl;
  conv2d_geometry(h, w, kh, kw, opt, oh, ow, pt, pl);
  Tensor out({n, oh, ow, oc});
  const double* xp = x.data();
  const double* kp = kernel.data();
  double* op = out.data();
  int64_t s = opt.stride;
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        double* orow = op + ((in * oh + oy) * ow + ox) * oc;
        for (int64_t ky = 0; ky < kh; ++ky) {
          int64_t iy = oy * s + ky - pt;
          if (iy < 0 || iy >= h) continue;
          for (int64_t kx = 0; kx < kw; ++kx) {
            int64_t ix = ox * s + kx - pl;
            if (ix < 0 || ix >= w) continue;
            const double* xrow = xp + ((in * h + iy) * w + ix) * c;
            const double* krow = kp + (ky * kw + kx) * c * oc;
            for (int64_t ic = 0; ic < c; ++ic) {
              double xv = xrow[ic];
              const double* kc = krow + ic * oc;
              for (int64_t o = 0; o < oc; ++o) orow[o] += xv * kc[o];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  double* o = out.data();
  for (int64_t i = 0; i < out.size(); ++i) o[i] = o[i] > 0.0 ? o[i] : 0.0;
  return out;
}

Tensor flatten(const Tensor& a) {
  if (a.rank() < 2) {
    throw InputError("flatten: rank must be >= 2, got shape " + a.shape_str());
  }
  return a.reshaped({a.extent(0), a.size() / a.extent(0)});
}

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) { return a.reshaped(std::move(shape)); }

Tensor reduce_sum(const Tensor& a) {
  double acc = 0.0;
  const double* p = a.data();
  for (int64_t i = 0; i < a.size(); ++i) acc += p[i];
  return Tensor::scalar(acc);
}

static void check_labels(const Tensor& labels, int64_t n, int64_t K, const char* op) {
  if (labels.rank() != 1 || labels.extent(0) != n) {
    throw InputError(std::string(op) + ": labels must be rank-1 of length " + std::to_string(n) +
                     ", got " + labels.shape_str());
  }
  for (int64_t i = 0; i < n; ++i) {
    double l = labels[i];
    if (l != std::floor(l) || l < 0 || l >= static_cast<double>(K)) {
      throw InputError(std::string(op) + ": label " + std::to_string(l) +
                       " is not an integer in [0," + std::to_string(K) + ")");
    }
  }
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& labels) {
  if (logits.rank() != 2) {
    throw InputError("softmax_cross_entropy: logits must be [n,K], got " + logits.shape_str());
  }
  int64_t n = logits.extent(0), K = logits.extent(1);
  check_labels(labels, n, K, "softmax_cross_entropy");
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * K;
    double zmax = z[0];
    for (int64_t j = 1; j < K; ++j) zmax = std::max(zmax, z[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < K; ++j) sum += std::exp(z[j] - zmax);
    int64_t label = static_cast<int64_t>(labels[i]);
    total += std::log(sum) + zmax - z[label];
  }
  return Tensor::scalar(total / static_cast<double>(n));
}

Tensor softmax(const Tensor& logits) {
  Tensor two = logits.rank() == 1 ? logits.reshaped({1, logits.extent(0)}) : logits;
  if (two.rank() != 2) {
    throw InputError("softmax: logits must be [n,K] or [K], got " + logits.shape_str());
  }
  int64_t n = two.extent(0), K = two.extent(1);
  Tensor out = two;
  for (int64_t i = 0; i < n; ++i) {
    double* z = out.data() + i * K;
    double zmax = z[0];
    for (int64_t j = 1; j < K; ++j) zmax = std::max(zmax, z[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < K; ++j) {
      z[j] = std::exp(z[j] - zmax);
      sum += z[j];
    }
    for (int64_t j = 0; j < K; ++j) z[j] /= sum;
  }
  return logits.rank() == 1 ? out.reshaped({K}) : out;
}

}  // namespace ops

// --- Tape -------------------------------------------------------------------

namespace {
std::atomic<uint64_t> g_next_tape_id{1};
}

Tape::Tape() : tape_id_(g_next_tape_id.fetch_add(1)) {}

uint32_t Tape::check(ValueId id, const char* op) const {
  if (id.tape != tape_id_ || id.index >= nodes_.size()) {
    throw InputError(std::string(op) + ": value is detached (recorded on a different tape)");
  }
  return id.index;
}

ValueId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return ValueId{static_cast<uint32_t>(nodes_.size() - 1), tape_id_};
}

ValueId Tape::leaf(Tensor value) {
  Node n;
  n.kind = OpKind::leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

ValueId Tape::add(ValueId a, ValueId b) {
  Node n;
  n.kind = OpKind::add;
  n.a = static_cast<int>(check(a, "add"));
  n.b = static_cast<int>(check(b, "add"));
  n.value = ops::add(nodes_[n.a].value, nodes_[n.b].value);
  return push(std::move(n));
}

ValueId Tape::mul(ValueId a, ValueId b) {
  Node n;
  n.kind = OpKind::mul;
  n.a = static_cast<int>(check(a, "mul"));
  n.b = static_cast<int>(check(b, "mul"));
  n.value = ops::mul(nodes_[n.a].value, nodes_[n.b].value);
  return push(std::move(n));
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  Node n;
  n.kind = OpKind::matmul;
  n.a = static_cast<int>(check(a, "matmul"));
  n.b = static_cast<int>(check(b, "matmul"));
  n.value = ops::matmul(nodes_[n.a].value, nodes_[n.b].value);
  return push(std::move(n));
}

ValueId Tape::conv2d(ValueId x, ValueId kernel, const Conv2dOptions& opt) {
  Node n;
  n.kind = OpKind::conv2d;
  n.a = static_cast<int>(check(x, "conv2d"));
  n.b = static_cast<int>(check(kernel, "conv2d"));
  n.conv = opt;
  n.value = ops::conv2d(nodes_[n.a].value, nodes_[n.b].value, opt);
  return push(std::move(n));
}

ValueId Tape::relu(ValueId a) {
  Node n;
  n.kind = OpKind::relu;
  n.a = static_cast<int>(check(a, "relu"));
  n.value = ops::relu(nodes_[n.a].value);
  return push(std::move(n));
}

ValueId Tape::flatten(ValueId a) {
  Node n;
  n.kind = OpKind::flatten;
  n.a = static_cast<int>(check(a, "flatten"));
  n.value = ops::flatten(nodes_[n.a].value);
  return push(std::move(n));
}

ValueId Tape::reshape(ValueId a, std::vector<int64_t> shape) {
  Node n;
  n.kind = OpKind::reshape;
  n.a = static_cast<int>(check(a, "reshape"));
  n.value = ops::reshape(nodes_[n.a].value, std::move(shape));
  return push(std::move(n));
}

ValueId Tape::reduce_sum(ValueId a) {
  Node n;
  n.kind = OpKind::reduce_sum;
  n.a = static_cast<int>(check(a, "reduce_sum"));
  n.value = ops::reduce_sum(nodes_[n.a].value);
  return push(std::move(n));
}

ValueId Tape::softmax_cross_entropy(ValueId logits, ValueId labels) {
  Node n;
  n.kind = OpKind::softmax_xent;
  n.a = static_cast<int>(check(logits, "softmax_cross_entropy"));
  n.b = static_cast<int>(check(labels, "softmax_cross_entropy"));
  n.value = ops::softmax_cross_entropy(nodes_[n.a].value, nodes_[n.b].value);
  n.aux = ops::softmax(nodes_[n.a].value);
  return push(std::move(n));
}

const Tensor& Tape::value(ValueId id) const { return nodes_[check(id, "value")].value; }

namespace {

void ensure(Tensor& g, const Tensor& like) {
  if (g.empty()) g = Tensor::zeros_like(like);
}

void axpy(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (int64_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

std::vector<Tensor> Tape::gradient(ValueId output, const std::vector<ValueId>& wrt) const {
  uint32_t oi = check(output, "gradient");
  if (nodes_[oi].value.size() != 1) {
    throw InputError("gradient: output must be scalar, got shape " + nodes_[oi].value.shape_str());
  }
  for (ValueId w : wrt) check(w, "gradient");

  std::vector<Tensor> grads(oi + 1);
  grads[oi] = Tensor::full(nodes_[oi].value.shape(), 1.0);

  for (int64_t i = oi; i >= 0; --i) {
    if (grads[static_cast<size_t>(i)].empty()) continue;
    const Node& n = nodes_[static_cast<size_t>(i)];
    const Tensor& g = grads[static_cast<size_t>(i)];
    switch (n.kind) {
      case OpKind::leaf:
        break;
      case OpKind::add: {
        const Tensor& av = nodes_[n.a].value;
        const Tensor& bv = nodes_[n.b].value;
        Tensor& ga = grads[static_cast<size_t>(n.a)];
        ensure(ga, av);
        axpy(ga, g);
        Tensor& gb = grads[static_cast<size_t>(n.b)];
        ensure(gb, bv);
        if (av.same_shape(bv)) {
          axpy(gb, g);
        } else {  // bias broadcast over trailing axis
          int64_t c = bv.extent(0);
          double* d = gb.data();
          const double* s = g.data();
          for (int64_t k = 0; k < g.size(); k += c) {
            for (int64_t j = 0; j < c; ++j) d[j] += s[k + j];
          }
        }
        break;
      }
      case OpKind::mul: {
        const Tensor& av = nodes_[n.a].value;
        const Tensor& bv = nodes_[n.b].value;
        Tensor& ga = grads[static_cast<size_t>(n.a)];
        ensure(ga, av);
        Tensor& gb = grads[static_cast<size_t>(n.b)];
        ensure(gb, bv);
        const double* s = g.data();
        for (int64_t k = 0; k < g.size(); ++k) {
          ga.data()[k] += s[k] * bv[k];
          gb.data()[k] += s[k] * av[k];
        }
        break;
      }
      case OpKind::matmul: {
        const Tensor& av = nodes_[n.a].value;  // [r,k]
        const Tensor& bv = nodes_[n.b].value;  // [k,m]
        int64_t r = av.extent(0), k = av.extent(1), m = bv.extent(1);
        Tensor& ga = grads[static_cast<size_t>(n.a)];
        ensure(ga, av);
        Tensor& gb = grads[static_cast<size_t>(n.b)];
        ensure(gb, bv);
        const double* gp = g.data();
        // ga = g . b^T ; gb = a^T . g
        for (int64_t i2 = 0; i2 < r; ++i2) {
          for (int64_t j = 0; j < m; ++j) {
            double gv = gp[i2 * m + j];
            if (gv == 0.0) continue;
            const double* brow = bv.data() + j;
            double* garow = ga.data() + i2 * k;
            for (int64_t kk = 0; kk < k; ++kk) garow[kk] += gv * brow[kk * m];
          }
        }
        for (int64_t kk = 0; kk < k; ++kk) {
          for (int64_t i2 = 0; i2 < r; ++i2) {
            double av2 = av[i2 * k + kk];
            if (av2 == 0.0) continue;
            const double* grow = gp + i2 * m;
            double* gbrow = gb.data() + kk * m;
            for (int64_t j = 0; j < m; ++j) gbrow[j] += av2 * grow[j];
          }
        }
        break;
      }
      case OpKind::conv2d: {
        const Tensor& xv = nodes_[n.a].value;
        const Tensor& kv = nodes_[n.b].value;
        Tensor& gx = grads[static_cast<size_t>(n.a)];
        ensure(gx, xv);
        Tensor& gk = grads[static_cast<size_t>(n.b)];
        ensure(gk, kv);
        int64_t bn = xv.extent(0), h = xv.extent(1), w = xv.extent(2), c = xv.extent(3);
        int64_t kh = kv.extent(0), kw = kv.extent(1), oc = kv.extent(3);
        int64_t oh = n.value.extent(1), ow = n.value.extent(2);
        int64_t s = n.conv.stride;
        int64_t dummy_h, dummy_w, pt, pl;
        ops::conv2d_geometry(h, w, kh, kw, n.conv, dummy_h, dummy_w, pt, pl);
        const double* gp = g.data();
        const double* xp = xv.data();
        const double* kp = kv.data();
        for (int64_t in = 0; in < bn; ++in) {
          for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
              const double* grow = gp + ((in * oh + oy) * ow + ox) * oc;
              for (int64_t ky = 0; ky < kh; ++ky) {
                int64_t iy = oy * s + ky - pt;
                if (iy < 0 || iy >= h) continue;
                for (int64_t kx = 0; kx < kw; ++kx) {
                  int64_t ix = ox * s + kx - pl;
                  if (ix < 0 || ix >= w) continue;
                  const double* xrow = xp + ((in * h + iy) * w + ix) * c;
                  double* gxrow = gx.data() + ((in * h + iy) * w + ix) * c;
                  const double* krow = kp + (ky * kw + kx) * c * oc;
                  double* gkrow = gk.data() + (ky * kw + kx) * c * oc;
                  for (int64_t ic = 0; ic < c; ++ic) {
                    const double* kc = krow + ic * oc;
                    double* gkc = gkrow + ic * oc;
                    double xvv = xrow[ic];
                    double acc = 0.0;
                    for (int64_t o = 0; o < oc; ++o) {
                      acc += grow[o] * kc[o];
                      gkc[o] += grow[o] * xvv;
                    }
                    gxrow[ic] += acc;
                  }
                }
              }
            }
          }
        }
        break;
      }
      case OpKind::relu: {
        const Tensor& av = nodes_[n.a].value;
        Tensor& ga = grads[static_cast<size_t>(n.a)];
        ensure(ga, av);
        const double* s = g.data();
        for (int64_t k = 0; k < g.size(); ++k) {
          if (av[k] > 0.0) ga.data()[k] += s[k];
        }
        break;
      }
      case OpKind::flatten:
      case OpKind::reshape: {
        const Tensor& av = nodes_[n.a].value;
        Tensor& ga = grads[static_cast<size_t>(n.a)];
        ensure(ga, av);
        axpy(ga, g);  // same element order
        break;
      }
      case OpKind::reduce_sum: {
        const Tensor& av = nodes_[n.a].value;
        Tensor& ga = grads[static_cast<size_t>(n.a)];
        ensure(ga, av);
        double gv = g[0];
        for (int64_t k = 0; k < ga.size(); ++k) ga.data()[k] += gv;
        break;
      }
      case OpKind::softmax_xent: {
        const Tensor& logits = nodes_[n.a].value;
        const Tensor& labels = nodes_[n.b].value;
        int64_t bn = logits.extent(0), K = logits.extent(1);
        Tensor& ga = grads[static_cast<size_t>(n.a)];
        ensure(ga, logits);
        double scale = g[0] / static_cast<double>(bn);
        for (int64_t i2 = 0; i2 < bn; ++i2) {
          int64_t label = static_cast<int64_t>(labels[i2]);
          for (int64_t j = 0; j < K; ++j) {
            double p = n.aux[i2 * K + j];
            ga.data()[i2 * K + j] += scale * (p - (j == label ? 1.0 : 0.0));
          }
        }
        break;
      }
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (ValueId w : wrt) {
    if (w.index > oi || grads[w.index].empty()) {
      out.push_back(Tensor::zeros_like(nodes_[w.index].value));
    } else {
      out.push_back(grads[w.index]);  // copy: wrt may repeat a value
    }
  }
  return out;
}

}  // namespace tcav
