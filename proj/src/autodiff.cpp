#include "episodica/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "episodica/error.hpp"

namespace episodica::ad {

const Tensor& Var::value() const {
  if (!tape) throw ContractError("unbound Var");
  return tape->value(id);
}

Tensor Gradients::of(Var leaf) const {
  if (leaf.tape != tape_) throw ContractError("gradient requested for a Var from another tape");
  if (leaf.id < grads_.size() && grads_[leaf.id]) return *grads_[leaf.id];
  return Tensor(leaf.value().shape());
}

bool Gradients::reached(Var leaf) const { return leaf.id < grads_.size() && grads_[leaf.id].has_value(); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), true, true, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), false, true, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [this](std::size_t i) { return nodes_[i].requires_grad; });
  nodes_.push_back(Node{std::move(value), needs, false, std::move(inputs), needs ? std::move(fn) : BackwardFn{}});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& slot = grads_.at(id);
  if (!slot) slot.emplace(nodes_[id].value.shape());
  return *slot;
}

Gradients Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
  if (value(loss.id).size() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(value(loss.id).shape()));
  grads_.assign(nodes_.size(), std::nullopt);
  grads_[loss.id].emplace(Tensor::full(value(loss.id).shape(), 1.0f));
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!grads_[id] || !node.backward) continue;
    node.backward(*this, id);
    // intermediate gradients are no longer needed once propagated
    grads_[id].reset();
  }
  Gradients out;
  out.tape_ = this;
  out.grads_.resize(nodes_.size());
  for (std::size_t id = 0; id < nodes_.size(); ++id)
    if (nodes_[id].is_leaf && nodes_[id].requires_grad) out.grads_[id] = std::move(grads_[id]);
  if (nodes_[loss.id].is_leaf && nodes_[loss.id].requires_grad)
    out.grads_[loss.id].emplace(Tensor::full(value(loss.id).shape(), 1.0f));
  grads_.clear();
  return out;
}

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.tape || a.tape != b.tape) throw ContractError(std::string(op) + ": operands recorded on different tapes");
  return *a.tape;
}

void accumulate(Tape& t, std::size_t id, const Tensor& delta) {
  if (!t.requires_grad(id)) return;
  auto dst = t.grad_buffer(id).data();
  auto src = delta.data();
  if (dst.size() == 1 && src.size() != 1) {  // broadcast scalar operand: reduce
    dst[0] += static_cast<float>(episodica::sum(delta));
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  Tensor out = episodica::matmul(a.value(), b.value());
  return t.record(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av = tp.value(ia);
    const Tensor& bv = tp.value(ib);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (tp.requires_grad(ia))  // dA = G * B^T
      kernels::gemm(g.raw(), bv.raw(), tp.grad_buffer(ia).raw(), m, n, k, false, true, true);
    if (tp.requires_grad(ib))  // dB = A^T * G
      kernels::gemm(av.raw(), g.raw(), tp.grad_buffer(ib).raw(), k, m, n, true, false, true);
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.record(episodica::transpose(a.value()), {a.id}, [ia = a.id](Tape& tp, std::size_t self) {
    accumulate(tp, ia, episodica::transpose(tp.grad(self)));
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  return t.record(episodica::add(a.value(), b.value()), {a.id, b.id},
                  [ia = a.id, ib = b.id](Tape& tp, std::size_t self) {
                    accumulate(tp, ia, tp.grad(self));
                    accumulate(tp, ib, tp.grad(self));
                  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  return t.record(episodica::sub(a.value(), b.value()), {a.id, b.id},
                  [ia = a.id, ib = b.id](Tape& tp, std::size_t self) {
                    accumulate(tp, ia, tp.grad(self));
                    accumulate(tp, ib, episodica::scale(tp.grad(self), -1.0f));
                  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  return t.record(episodica::mul(a.value(), b.value()), {a.id, b.id},
                  [ia = a.id, ib = b.id](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    accumulate(tp, ia, episodica::mul(g, tp.value(ib)));
                    accumulate(tp, ib, episodica::mul(g, tp.value(ia)));
                  });
}

Var scale(Var a, float factor) {
  return a.tape->record(episodica::scale(a.value(), factor), {a.id}, [ia = a.id, factor](Tape& tp, std::size_t self) {
    accumulate(tp, ia, episodica::scale(tp.grad(self), factor));
  });
}

Var add_scalar(Var a, float value) {
  return a.tape->record(episodica::add_scalar(a.value(), value), {a.id},
                        [ia = a.id](Tape& tp, std::size_t self) { accumulate(tp, ia, tp.grad(self)); });
}

Var relu(Var a) {
  return a.tape->record(episodica::relu(a.value()), {a.id}, [ia = a.id](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ia);
    auto dst = tp.grad_buffer(ia).data();
    // subgradient at exactly 0 is taken as 0
    for (std::size_t i = 0; i < dst.size(); ++i)
      if (x[i] > 0.0f) dst[i] += g[i];
  });
}

Var exp(Var a) {
  return a.tape->record(episodica::exp(a.value()), {a.id}, [ia = a.id](Tape& tp, std::size_t self) {
    accumulate(tp, ia, episodica::mul(tp.grad(self), tp.value(self)));
  });
}

Var log(Var a) {
  return a.tape->record(episodica::log(a.value()), {a.id}, [ia = a.id](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ia);
    auto dst = tp.grad_buffer(ia).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] / x[i];
  });
}

Var l2_normalize(Var a) {
  const Tensor& x = a.value();
  if (x.rank() != 2) throw DimensionError("l2_normalize: expected rank 2, got " + shape_to_string(x.shape()));
  std::vector<double> norms(x.dim(0));
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    double ss = 0.0;
    for (float v : x.row(r)) ss += static_cast<double>(v) * v;
    norms[r] = std::sqrt(ss);
  }
  Tensor out = episodica::l2_normalize(x);
  return a.tape->record(std::move(out), {a.id}, [ia = a.id, norms = std::move(norms)](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& dx = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < y.dim(0); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += static_cast<double>(yr[c]) * gr[c];
      auto dr = dx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) dr[c] += static_cast<float>((gr[c] - yr[c] * dot) / norms[r]);
    }
  });
}

Var softmax_rows(Var a) {
  return a.tape->record(episodica::softmax_rows(a.value()), {a.id}, [ia = a.id](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& dx = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < y.dim(0); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += static_cast<double>(yr[c]) * gr[c];
      auto dr = dx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) dr[c] += static_cast<float>(yr[c] * (gr[c] - dot));
    }
  });
}

Var sum(Var a) {
  const float total = static_cast<float>(episodica::sum(a.value()));
  return a.tape->record(Tensor::scalar(total), {a.id}, [ia = a.id](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const float g = tp.grad(self).item();
    for (float& v : tp.grad_buffer(ia).data()) v += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0f / static_cast<float>(a.value().size())); }

Var detach(Var a) { return a.tape->constant(a.value()); }

Var add_row_bias(Var x, Var bias) {
  Tape& t = same_tape(x, bias, "add_row_bias");
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1))
    throw DimensionError("add_row_bias: shapes " + shape_to_string(xv.shape()) + " and " + shape_to_string(bv.shape()));
  Tensor out = xv;
  for (std::size_t r = 0; r < xv.dim(0); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  return t.record(std::move(out), {x.id, bias.id}, [ix = x.id, ib = bias.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    accumulate(tp, ix, g);
    if (!tp.requires_grad(ib)) return;
    Tensor& db = tp.grad_buffer(ib);
    std::vector<double> acc(db.size(), 0.0);
    for (std::size_t r = 0; r < g.dim(0); ++r) {
      auto row = g.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) acc[c] += row[c];
    }
    for (std::size_t c = 0; c < acc.size(); ++c) db[c] += static_cast<float>(acc[c]);
  });
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, stride, ho, wo;
  std::size_t patch() const { return cin * 9; }
  std::size_t positions() const { return ho * wo; }
};

// cols[(c*9 + ky*3 + kx), (oy*wo + ox)] = x[c, oy*s + ky - 1, ox*s + kx - 1] (zero outside)
void im2col(const float* x, const ConvGeometry& g, float* cols) {
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        float* dst = cols + ((c * 3 + ky) * 3 + kx) * p;
        const float* plane = x + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - 1;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - 1;
            const bool inside = iy >= 0 && iy < static_cast<long>(g.h) && ix >= 0 && ix < static_cast<long>(g.w);
            dst[oy * g.wo + ox] = inside ? plane[iy * g.w + ix] : 0.0f;
          }
        }
      }
}

void col2im_add(const float* cols, const ConvGeometry& g, float* dx) {
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const float* src = cols + ((c * 3 + ky) * 3 + kx) * p;
        float* plane = dx + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - 1;
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - 1;
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            plane[iy * g.w + ix] += src[oy * g.wo + ox];
          }
        }
      }
}

}  // namespace

Var conv3x3(Var x, Var weight, Var bias, std::size_t stride) {
  Tape& t = same_tape(x, weight, "conv3x3");
  same_tape(x, bias, "conv3x3");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (stride == 0) throw ConfigError("conv3x3: stride must be positive");
  if (xv.rank() != 4 || wv.rank() != 4 || wv.dim(2) != 3 || wv.dim(3) != 3 || wv.dim(1) != xv.dim(1) ||
      bv.rank() != 1 || bv.dim(0) != wv.dim(0))
    throw DimensionError("conv3x3: input " + shape_to_string(xv.shape()) + ", weight " + shape_to_string(wv.shape()) +
                         ", bias " + shape_to_string(bv.shape()));
  ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), stride, 0, 0};
  g.ho = (g.h - 1) / stride + 1;
  g.wo = (g.w - 1) / stride + 1;

  Tensor out({g.batch, g.cout, g.ho, g.wo});
  std::vector<float> cols(g.patch() * g.positions());
  const std::size_t in_stride = g.cin * g.h * g.w;
  const std::size_t out_stride = g.cout * g.positions();
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(xv.raw() + n * in_stride, g, cols.data());
    float* dst = out.raw() + n * out_stride;
    kernels::gemm(wv.raw(), cols.data(), dst, g.cout, g.patch(), g.positions(), false, false, false);
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t q = 0; q < g.positions(); ++q) dst[co * g.positions() + q] += bv[co];
  }

  return t.record(std::move(out), {x.id, weight.id, bias.id},
                  [ix = x.id, iw = weight.id, ib = bias.id, g](Tape& tp, std::size_t self) {
                    const Tensor& grad = tp.grad(self);
                    const Tensor& xval = tp.value(ix);
                    const Tensor& wval = tp.value(iw);
                    const bool need_x = tp.requires_grad(ix);
                    const bool need_w = tp.requires_grad(iw);
                    const bool need_b = tp.requires_grad(ib);
                    std::vector<float> cols(g.patch() * g.positions());
                    std::vector<float> dcols(need_x ? cols.size() : 0);
                    std::vector<double> db(g.cout, 0.0);
                    const std::size_t in_stride = g.cin * g.h * g.w;
                    const std::size_t out_stride = g.cout * g.positions();
                    for (std::size_t n = 0; n < g.batch; ++n) {
                      const float* gout = grad.raw() + n * out_stride;
                      if (need_w) {
                        im2col(xval.raw() + n * in_stride, g, cols.data());
                        kernels::gemm(gout, cols.data(), tp.grad_buffer(iw).raw(), g.cout, g.positions(),
                                      g.patch(), false, true, true);
                      }
                      if (need_x) {
                        kernels::gemm(wval.raw(), gout, dcols.data(), g.patch(), g.cout, g.positions(), true,
                                      false, false);
                        col2im_add(dcols.data(), g, tp.grad_buffer(ix).raw() + n * in_stride);
                      }
                      if (need_b)
                        for (std::size_t co = 0; co < g.cout; ++co)
                          for (std::size_t q = 0; q < g.positions(); ++q) db[co] += gout[co * g.positions() + q];
                    }
                    if (need_b) {
                      Tensor& dbias = tp.grad_buffer(ib);
                      for (std::size_t co = 0; co < g.cout; ++co) dbias[co] += static_cast<float>(db[co]);
                    }
                  });
}

Var global_avg_pool(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw DimensionError("global_avg_pool: expected rank 4, got " + shape_to_string(xv.shape()));
  const std::size_t n = xv.dim(0), c = xv.dim(1), area = xv.dim(2) * xv.dim(3);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    const float* plane = xv.raw() + i * area;
    for (std::size_t p = 0; p < area; ++p) s += plane[p];
    out[i] = static_cast<float>(s / static_cast<double>(area));
  }
  return x.tape->record(std::move(out), {x.id}, [ix = x.id, n, c, area](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ix)) return;
    const Tensor& g = tp.grad(self);
    float* dx = tp.grad_buffer(ix).raw();
    const float inv = 1.0f / static_cast<float>(area);
    for (std::size_t i = 0; i < n * c; ++i) {
      const float v = g[i] * inv;
      for (std::size_t p = 0; p < area; ++p) dx[i * area + p] += v;
    }
  });
}

Var contrastive_ce(Var logits, std::span<const std::size_t> positive, std::span<const std::uint8_t> include) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw DimensionError("contrastive_ce: logits must be rank 2, got " + shape_to_string(z.shape()));
  const std::size_t n = z.dim(0), m = z.dim(1);
  if (positive.size() != n)
    throw ContractError("contrastive_ce: " + std::to_string(positive.size()) + " positives for " + std::to_string(n) +
                        " rows");
  if (!include.empty() && include.size() != n * m)
    throw ContractError("contrastive_ce: mask size does not match logits");
  auto allowed = [&](std::size_t r, std::size_t c) { return include.empty() || include[r * m + c] != 0; };

  // probabilities over the included entries, kept for the backward pass
  std::vector<float> probs(n * m, 0.0f);
  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t pos = positive[r];
    if (pos >= m || !allowed(r, pos))
      throw ContractError("contrastive_ce: positive index of row " + std::to_string(r) + " is out of range or masked");
    auto row = z.row(r);
    double mx = -INFINITY;
    for (std::size_t c = 0; c < m; ++c)
      if (allowed(r, c)) mx = std::max(mx, static_cast<double>(row[c]));
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c)
      if (allowed(r, c)) total += std::exp(row[c] - mx);
    const double lse = mx + std::log(total);
    out[r] = static_cast<float>(lse - row[pos]);
    for (std::size_t c = 0; c < m; ++c)
      if (allowed(r, c)) probs[r * m + c] = static_cast<float>(std::exp(row[c] - lse));
  }
  std::vector<std::size_t> pos_copy(positive.begin(), positive.end());
  return logits.tape->record(
      std::move(out), {logits.id},
      [il = logits.id, n, m, probs = std::move(probs), pos_copy = std::move(pos_copy)](Tape& tp, std::size_t self) {
        if (!tp.requires_grad(il)) return;
        const Tensor& g = tp.grad(self);
        Tensor& dz = tp.grad_buffer(il);
        for (std::size_t r = 0; r < n; ++r) {
          const float gr = g[r];
          for (std::size_t c = 0; c < m; ++c) dz[r * m + c] += gr * probs[r * m + c];
          dz[r * m + pos_copy[r]] -= gr;
        }
      });
}

}  // namespace episodica::ad
