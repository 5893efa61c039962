#include "dfseg/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfseg::nn {
namespace {

template <typename Scalar>
using NodeP = std::shared_ptr<Node<Scalar>>;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Unfolds a (C, H, W) image into a (C*k*k, Ho*Wo) row-major patch matrix.
template <typename Scalar>
void im2col(const Scalar* x, Index channels, Index height, Index width, Index k,
            const ConvSpec& s, Index out_h, Index out_w, Scalar* col) {
  const Index plane = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    const Scalar* src_c = x + c * height * width;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = col + ((c * k + ky) * k + kx) * plane;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * s.stride - s.padding + ky;
          Scalar* dst = row + oy * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, Scalar(0));
            continue;
          }
          const Scalar* src = src_c + iy * width;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * s.stride - s.padding + kx;
            dst[ox] = (ix >= 0 && ix < width) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patches back, accumulating into x.
template <typename Scalar>
void col2im(const Scalar* col, Index channels, Index height, Index width, Index k,
            const ConvSpec& s, Index out_h, Index out_w, Scalar* x) {
  const Index plane = out_h * out_w;
  for (Index c = 0; c < channels; ++c) {
    Scalar* dst_c = x + c * height * width;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* row = col + ((c * k + ky) * k + kx) * plane;
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= height) continue;
          const Scalar* src = row + oy * out_w;
          Scalar* dst = dst_c + iy * width;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * s.stride - s.padding + kx;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename Scalar>
bool is_pointwise(Index k, const ConvSpec& s) {
  return k == 1 && s.stride == 1 && s.padding == 0;
}

template <typename Scalar, typename F, typename G>
Var<Scalar> unary(const Var<Scalar>& x, F forward, G derivative) {
  Tensor<Scalar> out(x.shape());
  out.data = x.value().data.unaryExpr(forward);
  NodeP<Scalar> px = x.node();
  return make_op<Scalar>(std::move(out), {px}, [px, derivative](Node<Scalar>& self) {
    auto& g = px->grad_buffer();
    g += self.grad * self.value.data.binaryExpr(px->value.data, derivative);
  });
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   const ConvSpec& spec) {
  const Shape in = x.shape();
  const Shape ws = weight.shape();
  require(ws.c == in.c, "conv2d: input channels do not match weight");
  require(ws.h == ws.w, "conv2d: kernel must be square");
  const Index k = ws.h;
  const Index out_h = conv_out_size(in.h, k, spec);
  const Index out_w = conv_out_size(in.w, k, spec);
  require(out_h > 0 && out_w > 0, "conv2d: input smaller than kernel");
  const Index cout = ws.n;
  const Index patch = in.c * k * k;
  const bool pointwise = is_pointwise<Scalar>(k, spec);

  Tensor<Scalar> out(Shape{in.n, cout, out_h, out_w});
  Eigen::Map<const RowMatrix<Scalar>> w_mat(weight.value().data.data(), cout, patch);
  RowMatrix<Scalar> col;
  if (!pointwise) col.resize(patch, out_h * out_w);
  for (Index n = 0; n < in.n; ++n) {
    if (pointwise) {
      out.sample(n).noalias() = w_mat * x.value().sample(n);
    } else {
      im2col(x.value().sample_data(n), in.c, in.h, in.w, k, spec, out_h, out_w, col.data());
      out.sample(n).noalias() = w_mat * col;
    }
    if (bias.defined()) {
      out.sample(n).colwise() += bias.value().data.matrix();
    }
  }

  NodeP<Scalar> px = x.node(), pw = weight.node();
  std::vector<NodeP<Scalar>> parents{px, pw};
  NodeP<Scalar> pb;
  if (bias.defined()) {
    pb = bias.node();
    parents.push_back(pb);
  }
  return make_op<Scalar>(std::move(out), std::move(parents), [=](Node<Scalar>& self) {
    Eigen::Map<const RowMatrix<Scalar>> w(pw->value.data.data(), cout, patch);
    RowMatrix<Scalar> col_buf;
    if (!pointwise) col_buf.resize(patch, out_h * out_w);
    const Index out_plane = out_h * out_w;
    for (Index n = 0; n < in.n; ++n) {
      Eigen::Map<const RowMatrix<Scalar>> g(self.grad.data() + n * cout * out_plane, cout,
                                            out_plane);
      if (pb && pb->requires_grad) {
        pb->grad_buffer().matrix() += g.rowwise().sum();
      }
      if (pw->requires_grad) {
        Eigen::Map<RowMatrix<Scalar>> gw(pw->grad_buffer().data(), cout, patch);
        if (pointwise) {
          gw.noalias() += g * px->value.sample(n).transpose();
        } else {
          im2col(px->value.sample_data(n), in.c, in.h, in.w, k, spec, out_h, out_w,
                 col_buf.data());
          gw.noalias() += g * col_buf.transpose();
        }
      }
      if (px->requires_grad) {
        Eigen::Map<RowMatrix<Scalar>> gx(px->grad_buffer().data() + n * in.sample_size(), in.c,
                                         in.plane());
        if (pointwise) {
          gx.noalias() += w.transpose() * g;
        } else {
          col_buf.noalias() = w.transpose() * g;
          col2im(col_buf.data(), in.c, in.h, in.w, k, spec, out_h, out_w, gx.data());
        }
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& weight,
                             const Var<Scalar>& bias, const ConvSpec& spec) {
  const Shape in = x.shape();
  const Shape ws = weight.shape();
  require(ws.n == in.c, "conv_transpose2d: input channels do not match weight");
  require(ws.h == ws.w, "conv_transpose2d: kernel must be square");
  require(spec.output_padding < spec.stride, "conv_transpose2d: output_padding >= stride");
  const Index k = ws.h;
  const Index cout = ws.c;
  const Index out_h = conv_transpose_out_size(in.h, k, spec);
  const Index out_w = conv_transpose_out_size(in.w, k, spec);
  const Index patch = cout * k * k;

  Tensor<Scalar> out(Shape{in.n, cout, out_h, out_w});
  Eigen::Map<const RowMatrix<Scalar>> w_mat(weight.value().data.data(), in.c, patch);
  RowMatrix<Scalar> col(patch, in.plane());
  for (Index n = 0; n < in.n; ++n) {
    col.noalias() = w_mat.transpose() * x.value().sample(n);
    col2im(col.data(), cout, out_h, out_w, k, spec, in.h, in.w, out.sample_data(n));
    if (bias.defined()) out.sample(n).colwise() += bias.value().data.matrix();
  }

  NodeP<Scalar> px = x.node(), pw = weight.node();
  std::vector<NodeP<Scalar>> parents{px, pw};
  NodeP<Scalar> pb;
  if (bias.defined()) {
    pb = bias.node();
    parents.push_back(pb);
  }
  return make_op<Scalar>(std::move(out), std::move(parents), [=](Node<Scalar>& self) {
    Eigen::Map<const RowMatrix<Scalar>> w(pw->value.data.data(), in.c, patch);
    RowMatrix<Scalar> gcol(patch, in.plane());
    const Index out_sample = cout * out_h * out_w;
    for (Index n = 0; n < in.n; ++n) {
      const Scalar* g = self.grad.data() + n * out_sample;
      if (pb && pb->requires_grad) {
        Eigen::Map<const RowMatrix<Scalar>> gm(g, cout, out_h * out_w);
        pb->grad_buffer().matrix() += gm.rowwise().sum();
      }
      if (!pw->requires_grad && !px->requires_grad) continue;
      im2col(g, cout, out_h, out_w, k, spec, in.h, in.w, gcol.data());
      if (pw->requires_grad) {
        Eigen::Map<RowMatrix<Scalar>> gw(pw->grad_buffer().data(), in.c, patch);
        gw.noalias() += px->value.sample(n) * gcol.transpose();
      }
      if (px->requires_grad) {
        Eigen::Map<RowMatrix<Scalar>> gx(px->grad_buffer().data() + n * in.sample_size(), in.c,
                                         in.plane());
        gx.noalias() += w * gcol;
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor<Scalar> out(a.shape());
  out.data = a.value().data + b.value().data;
  NodeP<Scalar> pa = a.node(), pb = b.node();
  return make_op<Scalar>(std::move(out), {pa, pb}, [pa, pb](Node<Scalar>& self) {
    if (pa->requires_grad) pa->grad_buffer() += self.grad;
    if (pb->requires_grad) pb->grad_buffer() += self.grad;
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor<Scalar> out(a.shape());
  out.data = a.value().data - b.value().data;
  NodeP<Scalar> pa = a.node(), pb = b.node();
  return make_op<Scalar>(std::move(out), {pa, pb}, [pa, pb](Node<Scalar>& self) {
    if (pa->requires_grad) pa->grad_buffer() += self.grad;
    if (pb->requires_grad) pb->grad_buffer() -= self.grad;
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
  Tensor<Scalar> out(a.shape());
  out.data = a.value().data * factor;
  NodeP<Scalar> pa = a.node();
  return make_op<Scalar>(std::move(out), {pa}, [pa, factor](Node<Scalar>& self) {
    pa->grad_buffer() += self.grad * factor;
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  Shape s = parts.front().shape();
  s.c = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    require(ps.n == s.n && ps.h == s.h && ps.w == s.w, "concat_channels: shape mismatch");
    s.c += ps.c;
  }
  Tensor<Scalar> out(s);
  std::vector<NodeP<Scalar>> nodes;
  for (Index n = 0; n < s.n; ++n) {
    Index offset = 0;
    for (const auto& p : parts) {
      const Index len = p.shape().sample_size();
      std::copy_n(p.value().sample_data(n), len, out.sample_data(n) + offset);
      offset += len;
    }
  }
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_op<Scalar>(std::move(out), nodes, [nodes, s](Node<Scalar>& self) {
    for (Index n = 0; n < s.n; ++n) {
      Index offset = n * s.sample_size();
      for (const auto& p : nodes) {
        const Index len = p->value.shape.sample_size();
        if (p->requires_grad) {
          auto& g = p->grad_buffer();
          g.segment(n * len, len) += self.grad.segment(offset, len);
        }
        offset += len;
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); },
      [](Scalar, Scalar in) { return in > Scalar(0) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  return unary(
      x, [slope](Scalar v) { return v > Scalar(0) ? v : slope * v; },
      [slope](Scalar, Scalar in) { return in > Scalar(0) ? Scalar(1) : slope; });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return std::tanh(v); },
      [](Scalar out, Scalar) { return Scalar(1) - out * out; });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  return unary(
      x,
      [](Scalar v) {
        // Split by sign so exp never overflows.
        if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
        const Scalar e = std::exp(v);
        return e / (Scalar(1) + e);
      },
      [](Scalar out, Scalar) { return out * (Scalar(1) - out); });
}

template <typename Scalar>
Var<Scalar> clamp(const Var<Scalar>& x, Scalar lo, Scalar hi) {
  return unary(
      x, [lo, hi](Scalar v) { return std::clamp(v, lo, hi); },
      [lo, hi](Scalar, Scalar in) { return (in > lo && in < hi) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Var<Scalar> max_pool2d(const Var<Scalar>& x) {
  const Shape in = x.shape();
  require(in.h % 2 == 0 && in.w % 2 == 0, "max_pool2d: spatial size must be even");
  const Shape os{in.n, in.c, in.h / 2, in.w / 2};
  Tensor<Scalar> out(os);
  std::vector<Index> argmax(static_cast<std::size_t>(os.size()));
  const Scalar* src = x.value().data.data();
  Index o = 0;
  for (Index nc = 0; nc < in.n * in.c; ++nc) {
    const Index base = nc * in.plane();
    for (Index y = 0; y < os.h; ++y) {
      for (Index xx = 0; xx < os.w; ++xx, ++o) {
        Index best = base + (2 * y) * in.w + 2 * xx;
        for (Index dy = 0; dy < 2; ++dy) {
          for (Index dx = 0; dx < 2; ++dx) {
            const Index idx = base + (2 * y + dy) * in.w + 2 * xx + dx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        argmax[static_cast<std::size_t>(o)] = best;
        out.data[o] = src[best];
      }
    }
  }
  NodeP<Scalar> px = x.node();
  return make_op<Scalar>(std::move(out), {px}, [px, argmax = std::move(argmax)](Node<Scalar>& self) {
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[static_cast<Index>(i)];
  });
}

namespace {

// Shared normalization kernel. `groups` maps each (n, c) plane to a statistic
// slot: per channel for batch norm, per (n, c) for instance norm.
template <typename Scalar>
struct NormStats {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> mean, inv_std;
};

template <typename Scalar>
Var<Scalar> normalize_affine(const Var<Scalar>& x, const Var<Scalar>& gamma,
                             const Var<Scalar>& beta, const NormStats<Scalar>& stats,
                             bool per_instance, bool stats_depend_on_x) {
  const Shape s = x.shape();
  require(gamma.value().data.size() == s.c && beta.value().data.size() == s.c,
          "norm: affine parameter size does not match channels");
  Tensor<Scalar> xhat(s);
  Tensor<Scalar> out(s);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      const Index slot = per_instance ? n * s.c + c : c;
      const Index off = (n * s.c + c) * s.plane();
      xhat.data.segment(off, s.plane()) =
          (x.value().data.segment(off, s.plane()) - stats.mean[slot]) * stats.inv_std[slot];
      out.data.segment(off, s.plane()) =
          xhat.data.segment(off, s.plane()) * gamma.value().data[c] + beta.value().data[c];
    }
  }
  NodeP<Scalar> px = x.node(), pg = gamma.node(), pb = beta.node();
  const Index slots = stats.mean.size();
  auto inv_std = stats.inv_std;
  return make_op<Scalar>(
      std::move(out), {px, pg, pb},
      [=, xhat = std::move(xhat)](Node<Scalar>& self) {
        Eigen::Array<Scalar, Eigen::Dynamic, 1> sum_g = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(slots);
        Eigen::Array<Scalar, Eigen::Dynamic, 1> sum_gx = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(slots);
        Eigen::Array<Scalar, Eigen::Dynamic, 1> dgamma = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(s.c);
        Eigen::Array<Scalar, Eigen::Dynamic, 1> dbeta = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(s.c);
        for (Index n = 0; n < s.n; ++n) {
          for (Index c = 0; c < s.c; ++c) {
            const Index off = (n * s.c + c) * s.plane();
            const Index slot = per_instance ? n * s.c + c : c;
            auto g = self.grad.segment(off, s.plane());
            auto xh = xhat.data.segment(off, s.plane());
            const Scalar gs = g.sum();
            const Scalar gxs = (g * xh).sum();
            dbeta[c] += gs;
            dgamma[c] += gxs;
            sum_g[slot] += gs * pg->value.data[c];
            sum_gx[slot] += gxs * pg->value.data[c];
          }
        }
        if (pg->requires_grad) pg->grad_buffer() += dgamma;
        if (pb->requires_grad) pb->grad_buffer() += dbeta;
        if (!px->requires_grad) return;
        auto& gx = px->grad_buffer();
        const Scalar count = per_instance ? Scalar(s.plane()) : Scalar(s.n * s.plane());
        for (Index n = 0; n < s.n; ++n) {
          for (Index c = 0; c < s.c; ++c) {
            const Index off = (n * s.c + c) * s.plane();
            const Index slot = per_instance ? n * s.c + c : c;
            const Scalar gamma_c = pg->value.data[c];
            auto g = self.grad.segment(off, s.plane());
            if (stats_depend_on_x) {
              auto xh = xhat.data.segment(off, s.plane());
              gx.segment(off, s.plane()) +=
                  inv_std[slot] *
                  (g * gamma_c - sum_g[slot] / count - xh * (sum_gx[slot] / count));
            } else {
              gx.segment(off, s.plane()) += g * (gamma_c * inv_std[slot]);
            }
          }
        }
      });
}

}  // namespace

template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, bool training,
                       Scalar momentum, Scalar eps) {
  const Shape s = x.shape();
  NormStats<Scalar> stats;
  stats.mean.resize(s.c);
  stats.inv_std.resize(s.c);
  if (training) {
    const Scalar count = Scalar(s.n * s.plane());
    for (Index c = 0; c < s.c; ++c) {
      Scalar sum = 0;
      for (Index n = 0; n < s.n; ++n) sum += x.value().sample(n).row(c).sum();
      const Scalar m = sum / count;
      Scalar sq = 0;
      for (Index n = 0; n < s.n; ++n) {
        sq += (x.value().sample(n).row(c).array() - m).square().sum();
      }
      const Scalar var = sq / count;
      stats.mean[c] = m;
      stats.inv_std[c] = Scalar(1) / std::sqrt(var + eps);
      const Scalar unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean.data[c] = (1 - momentum) * running_mean.data[c] + momentum * m;
      running_var.data[c] = (1 - momentum) * running_var.data[c] + momentum * unbiased;
    }
  } else {
    stats.mean = running_mean.data;
    stats.inv_std = (running_var.data + eps).sqrt().inverse();
  }
  return normalize_affine(x, gamma, beta, stats, false, training);
}

template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                          Scalar eps) {
  const Shape s = x.shape();
  NormStats<Scalar> stats;
  stats.mean.resize(s.n * s.c);
  stats.inv_std.resize(s.n * s.c);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      auto seg = x.value().data.segment((n * s.c + c) * s.plane(), s.plane());
      const Scalar m = seg.mean();
      const Scalar var = (seg - m).square().mean();
      stats.mean[n * s.c + c] = m;
      stats.inv_std[n * s.c + c] = Scalar(1) / std::sqrt(var + eps);
    }
  }
  return normalize_affine(x, gamma, beta, stats, true, true);
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const Index count = x.value().data.size();
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out.data[0] = x.value().data.mean();
  NodeP<Scalar> px = x.node();
  return make_op<Scalar>(std::move(out), {px}, [px, count](Node<Scalar>& self) {
    px->grad_buffer() += self.grad[0] / Scalar(count);
  });
}

template <typename Scalar>
Var<Scalar> mean_squared_to(const Var<Scalar>& x, Scalar target) {
  const Index count = x.value().data.size();
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out.data[0] = (x.value().data - target).square().mean();
  NodeP<Scalar> px = x.node();
  return make_op<Scalar>(std::move(out), {px}, [px, count, target](Node<Scalar>& self) {
    px->grad_buffer() += (px->value.data - target) * (Scalar(2) * self.grad[0] / Scalar(count));
  });
}

template <typename Scalar>
Var<Scalar> mean_abs_diff(const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a.shape() == b.shape(), "mean_abs_diff: shape mismatch");
  const Index count = a.value().data.size();
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out.data[0] = (a.value().data - b.value().data).abs().mean();
  NodeP<Scalar> pa = a.node(), pb = b.node();
  return make_op<Scalar>(std::move(out), {pa, pb}, [pa, pb, count](Node<Scalar>& self) {
    const Scalar k = self.grad[0] / Scalar(count);
    auto sign = (pa->value.data - pb->value.data).unaryExpr([](Scalar v) {
      return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
    });
    if (pa->requires_grad) pa->grad_buffer() += sign * k;
    if (pb->requires_grad) pb->grad_buffer() -= sign * k;
  });
}

template <typename Scalar>
Var<Scalar> bce_with_logits_to(const Var<Scalar>& x, Scalar target) {
  const Index count = x.value().data.size();
  // log(1 + e^v) - t v, written stably.
  auto softplus = [](Scalar v) {
    return std::max(v, Scalar(0)) + std::log1p(std::exp(-std::abs(v)));
  };
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out.data[0] = (x.value().data.unaryExpr(softplus) - target * x.value().data).mean();
  NodeP<Scalar> px = x.node();
  return make_op<Scalar>(std::move(out), {px}, [px, count, target](Node<Scalar>& self) {
    auto sig = px->value.data.unaryExpr([](Scalar v) {
      if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
      const Scalar e = std::exp(v);
      return e / (Scalar(1) + e);
    });
    px->grad_buffer() += (sig - target) * (self.grad[0] / Scalar(count));
  });
}

template <typename Scalar>
Var<Scalar> dice_loss(const Var<Scalar>& pred, const Tensor<Scalar>& target, Scalar eps) {
  require(pred.shape() == target.shape, "dice_loss: shape mismatch");
  const Shape s = pred.shape();
  const Index len = s.sample_size();
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inter(s.n), denom(s.n);
  Scalar total = 0;
  for (Index n = 0; n < s.n; ++n) {
    auto p = pred.value().data.segment(n * len, len);
    auto t = target.data.segment(n * len, len);
    inter[n] = (p * t).sum();
    denom[n] = p.sum() + t.sum() + eps;
    total += Scalar(1) - (Scalar(2) * inter[n] + eps) / denom[n];
  }
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out.data[0] = total / Scalar(s.n);
  NodeP<Scalar> pp = pred.node();
  return make_op<Scalar>(std::move(out), {pp}, [=](Node<Scalar>& self) {
    auto& g = pp->grad_buffer();
    const Scalar k = self.grad[0] / Scalar(s.n);
    for (Index n = 0; n < s.n; ++n) {
      auto t = target.data.segment(n * len, len);
      const Scalar num = Scalar(2) * inter[n] + eps;
      const Scalar d = denom[n];
      g.segment(n * len, len) -= k * (Scalar(2) * t * d - num) / (d * d);
    }
  });
}

#define DFSEG_INSTANTIATE_OPS(S)                                                              \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, const ConvSpec&);       \
  template Var<S> conv_transpose2d(const Var<S>&, const Var<S>&, const Var<S>&,               \
                                   const ConvSpec&);                                          \
  template Var<S> add(const Var<S>&, const Var<S>&);                                          \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                          \
  template Var<S> scale(const Var<S>&, S);                                                    \
  template Var<S> concat_channels(const std::vector<Var<S>>&);                                \
  template Var<S> relu(const Var<S>&);                                                        \
  template Var<S> leaky_relu(const Var<S>&, S);                                               \
  template Var<S> tanh(const Var<S>&);                                                        \
  template Var<S> sigmoid(const Var<S>&);                                                     \
  template Var<S> clamp(const Var<S>&, S, S);                                                 \
  template Var<S> max_pool2d(const Var<S>&);                                                  \
  template Var<S> batch_norm(const Var<S>&, const Var<S>&, const Var<S>&, Tensor<S>&,         \
                             Tensor<S>&, bool, S, S);                                         \
  template Var<S> instance_norm(const Var<S>&, const Var<S>&, const Var<S>&, S);              \
  template Var<S> mean(const Var<S>&);                                                        \
  template Var<S> mean_squared_to(const Var<S>&, S);                                          \
  template Var<S> mean_abs_diff(const Var<S>&, const Var<S>&);                                \
  template Var<S> bce_with_logits_to(const Var<S>&, S);                                       \
  template Var<S> dice_loss(const Var<S>&, const Tensor<S>&, S);

DFSEG_INSTANTIATE_OPS(float)
DFSEG_INSTANTIATE_OPS(double)

}  // namespace dfseg::nn
