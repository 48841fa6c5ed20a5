#include "esiqa/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "esiqa/simd/kernels.hpp"

namespace esiqa::ops {

using detail::TensorNode;
using Buffer = std::vector<double>;

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

[[noreturn]] void bad_shape(const char* op, const Shape& a, const std::string& why) {
    throw ShapeError(std::string(op) + ": invalid extents " + shape_str(a) + " (" + why + ")");
}

Tensor finish(Shape shape, Buffer data, const char* op, std::vector<Tensor> inputs,
              std::function<void(TensorNode&)> backward) {
    Tensor out(std::move(shape), std::move(data));
    if (!grad_enabled()) return out;
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (!any) return out;
    TensorNode& node = *out.node();
    node.requires_grad = true;
    node.op = op;
    for (const Tensor& t : inputs) node.parents.push_back(t.node());
    node.backward = std::move(backward);
    return out;
}

TensorNode* grad_target(TensorNode& self, std::size_t i) {
    TensorNode* p = self.parents[i].get();
    return p->requires_grad ? p : nullptr;
}

void transpose2d(const double* src, std::size_t rows, std::size_t cols, double* dst) {
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
    }
}

Buffer transposed(const double* src, std::size_t rows, std::size_t cols) {
    Buffer out(rows * cols);
    transpose2d(src, rows, cols, out.data());
    return out;
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
    simd::gemm({m, n, k, a, b, c, accumulate});
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size());
    std::size_t s = 1;
    for (std::size_t i = shape.size(); i-- > 0;) {
        strides[i] = s;
        s *= shape[i];
    }
    return strides;
}

// Offsets into a broadcast operand for every element of the output.
std::vector<std::size_t> broadcast_offsets(const Shape& operand, const Shape& out) {
    const std::size_t rank = out.size();
    std::vector<std::size_t> strides(rank, 0);
    const auto own = row_major_strides(operand);
    const std::size_t shift = rank - operand.size();
    for (std::size_t i = 0; i < operand.size(); ++i) {
        if (operand[i] != 1) strides[shift + i] = own[i];
    }
    const std::size_t total = shape_numel(out);
    std::vector<std::size_t> offsets(total);
    std::vector<std::size_t> index(rank, 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        offsets[flat] = offset;
        for (std::size_t ax = rank; ax-- > 0;) {
            ++index[ax];
            offset += strides[ax];
            if (index[ax] < out[ax]) break;
            offset -= strides[ax] * out[ax];
            index[ax] = 0;
        }
    }
    return offsets;
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (ea != eb && ea != 1 && eb != 1) shape_mismatch(op, a, b);
        out[i] = std::max(ea, eb);
    }
    return out;
}

enum class BinaryKind { add, sub, mul };

Tensor binary(BinaryKind kind, const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        Buffer out(a.numel());
        switch (kind) {
            case BinaryKind::add: simd::add(a.data(), b.data(), out); break;
            case BinaryKind::sub: simd::sub(a.data(), b.data(), out); break;
            case BinaryKind::mul: simd::mul(a.data(), b.data(), out); break;
        }
        return finish(a.shape(), std::move(out), op, {a, b}, [kind](TensorNode& self) {
            const Buffer& g = self.grad;
            TensorNode* pa = grad_target(self, 0);
            TensorNode* pb = grad_target(self, 1);
            if (kind == BinaryKind::mul) {
                if (pa) {
                    Buffer& ga = pa->grad_buffer();
                    const Buffer& bv = self.parents[1]->data;
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                }
                if (pb) {
                    Buffer& gb = pb->grad_buffer();
                    const Buffer& av = self.parents[0]->data;
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                }
                return;
            }
            if (pa) simd::axpy(1.0, g, pa->grad_buffer());
            if (pb) simd::axpy(kind == BinaryKind::sub ? -1.0 : 1.0, g, pb->grad_buffer());
        });
    }

    Shape out_shape = broadcast_shape(op, a.shape(), b.shape());
    auto off_a = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(a.shape(), out_shape));
    auto off_b = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(b.shape(), out_shape));
    const auto av = a.data();
    const auto bv = b.data();
    Buffer out(shape_numel(out_shape));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = av[(*off_a)[i]];
        const double y = bv[(*off_b)[i]];
        out[i] = kind == BinaryKind::add ? x + y : kind == BinaryKind::sub ? x - y : x * y;
    }
    return finish(std::move(out_shape), std::move(out), op, {a, b}, [kind, off_a, off_b](TensorNode& self) {
        const Buffer& g = self.grad;
        const Buffer& av = self.parents[0]->data;
        const Buffer& bv = self.parents[1]->data;
        if (TensorNode* pa = grad_target(self, 0)) {
            Buffer& ga = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[(*off_a)[i]] += kind == BinaryKind::mul ? g[i] * bv[(*off_b)[i]] : g[i];
            }
        }
        if (TensorNode* pb = grad_target(self, 1)) {
            Buffer& gb = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double d = kind == BinaryKind::mul ? g[i] * av[(*off_a)[i]]
                                 : kind == BinaryKind::sub ? -g[i]
                                                           : g[i];
                gb[(*off_b)[i]] += d;
            }
        }
    });
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
    const auto xv = x.data();
    Buffer out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    return finish(x.shape(), std::move(out), op, {x}, [deriv](TensorNode& self) {
        TensorNode* px = grad_target(self, 0);
        if (!px) return;
        Buffer& gx = px->grad_buffer();
        const Buffer& xv = px->data;
        const Buffer& yv = self.data;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * deriv(xv[i], yv[i]);
    });
}

double sigmoid_value(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

// For each input element, the flat offset of the reduced output element.
std::vector<std::size_t> reduction_map(const Shape& in, const std::vector<bool>& reduced, Shape& out_shape) {
    out_shape.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (!reduced[i]) out_shape.push_back(in[i]);
    }
    Shape kept(in.size(), 1);
    for (std::size_t i = 0; i < in.size(); ++i) kept[i] = reduced[i] ? 1 : in[i];
    auto map = broadcast_offsets(kept, in);
    if (out_shape.empty()) out_shape.push_back(1);
    return map;
}

Tensor reduce(const char* op, const Tensor& x, std::vector<std::size_t> axes, bool average) {
    std::vector<bool> reduced(x.dim(), axes.empty());
    for (std::size_t ax : axes) {
        if (ax >= x.dim()) bad_shape(op, x.shape(), "axis " + std::to_string(ax) + " out of range");
        reduced[ax] = true;
    }
    Shape out_shape;
    auto map = std::make_shared<std::vector<std::size_t>>(reduction_map(x.shape(), reduced, out_shape));
    const std::size_t out_n = shape_numel(out_shape);
    const double factor = average ? static_cast<double>(out_n) / static_cast<double>(x.numel()) : 1.0;
    Buffer out(out_n, 0.0);
    const auto xv = x.data();
    if (out_n == 1) {
        out[0] = simd::sum(xv) * factor;
    } else {
        for (std::size_t i = 0; i < xv.size(); ++i) out[(*map)[i]] += xv[i];
        for (double& v : out) v *= factor;
    }
    return finish(std::move(out_shape), std::move(out), op, {x}, [map, factor](TensorNode& self) {
        TensorNode* px = grad_target(self, 0);
        if (!px) return;
        Buffer& gx = px->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[(*map)[i]] * factor;
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::add, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryKind::sub, "sub", a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::mul, "mul", a, b); }

Tensor scale(const Tensor& x, double factor) {
    Buffer out(x.numel());
    simd::scale(x.data(), factor, out);
    return finish(x.shape(), std::move(out), "scale", {x}, [factor](TensorNode& self) {
        if (TensorNode* px = grad_target(self, 0)) simd::axpy(factor, self.grad, px->grad_buffer());
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0)) shape_mismatch("matmul", a.shape(), b.shape());
    const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
    Buffer out(m * n);
    gemm(m, n, k, a.data().data(), b.data().data(), out.data(), false);
    return finish({m, n}, std::move(out), "matmul", {a, b}, [m, n, k](TensorNode& self) {
        const Buffer& g = self.grad;
        if (TensorNode* pa = grad_target(self, 0)) {
            const Buffer bt = transposed(self.parents[1]->data.data(), k, n);
            gemm(m, k, n, g.data(), bt.data(), pa->grad_buffer().data(), true);
        }
        if (TensorNode* pb = grad_target(self, 1)) {
            const Buffer at = transposed(self.parents[0]->data.data(), m, k);
            gemm(k, n, m, at.data(), g.data(), pb->grad_buffer().data(), true);
        }
    });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.dim() < 3 || a.dim() != b.dim()) shape_mismatch("bmm", a.shape(), b.shape());
    const std::size_t r = a.dim();
    for (std::size_t i = 0; i + 2 < r; ++i) {
        if (a.size(i) != b.size(i)) shape_mismatch("bmm", a.shape(), b.shape());
    }
    if (a.size(r - 1) != b.size(r - 2)) shape_mismatch("bmm", a.shape(), b.shape());
    const std::size_t m = a.size(r - 2), k = a.size(r - 1), n = b.size(r - 1);
    const std::size_t batch = a.numel() / (m * k);
    Shape out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    Buffer out(batch * m * n);
    const double* av = a.data().data();
    const double* bv = b.data().data();
    for (std::size_t i = 0; i < batch; ++i) gemm(m, n, k, av + i * m * k, bv + i * k * n, out.data() + i * m * n, false);
    return finish(std::move(out_shape), std::move(out), "bmm", {a, b}, [batch, m, n, k](TensorNode& self) {
        const Buffer& g = self.grad;
        TensorNode* pa = grad_target(self, 0);
        TensorNode* pb = grad_target(self, 1);
        const Buffer& av = self.parents[0]->data;
        const Buffer& bv = self.parents[1]->data;
        Buffer tmp;
        for (std::size_t i = 0; i < batch; ++i) {
            const double* gi = g.data() + i * m * n;
            if (pa) {
                tmp = transposed(bv.data() + i * k * n, k, n);
                gemm(m, k, n, gi, tmp.data(), pa->grad_buffer().data() + i * m * k, true);
            }
            if (pb) {
                tmp = transposed(av.data() + i * m * k, m, k);
                gemm(k, n, m, tmp.data(), gi, pb->grad_buffer().data() + i * k * n, true);
            }
        }
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.dim()) bad_shape("softmax", x.shape(), "axis " + std::to_string(axis) + " out of range");
    const AxisSplit s = split_at(x.shape(), axis);
    const auto xv = x.data();
    Buffer out(xv.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            double mx = -INFINITY;
            for (std::size_t j = 0; j < s.extent; ++j) mx = std::max(mx, xv[base + j * s.inner]);
            double total = 0.0;
            for (std::size_t j = 0; j < s.extent; ++j) {
                const double e = std::exp(xv[base + j * s.inner] - mx);
                out[base + j * s.inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < s.extent; ++j) out[base + j * s.inner] /= total;
        }
    }
    return finish(x.shape(), std::move(out), "softmax", {x}, [s](TensorNode& self) {
        TensorNode* px = grad_target(self, 0);
        if (!px) return;
        Buffer& gx = px->grad_buffer();
        const Buffer& y = self.data;
        const Buffer& g = self.grad;
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.extent * s.inner + in;
                double dotp = 0.0;
                for (std::size_t j = 0; j < s.extent; ++j) dotp += g[base + j * s.inner] * y[base + j * s.inner];
                for (std::size_t j = 0; j < s.extent; ++j) {
                    const std::size_t idx = base + j * s.inner;
                    gx[idx] += y[idx] * (g[idx] - dotp);
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const std::optional<Tensor>& gamma, const std::optional<Tensor>& beta) {
    const std::size_t c = x.shape().back();
    if (gamma && gamma->shape() != Shape{c}) shape_mismatch("layer_norm", x.shape(), gamma->shape());
    if (beta && beta->shape() != Shape{c}) shape_mismatch("layer_norm", x.shape(), beta->shape());
    const std::size_t rows = x.numel() / c;
    const auto xv = x.data();
    auto xhat = std::make_shared<Buffer>(xv.size());
    auto inv_std = std::make_shared<Buffer>(rows);
    Buffer out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (row[j] - mu) * is;
            (*xhat)[r * c + j] = h;
            double y = h;
            if (gamma) y *= gamma->data()[j];
            if (beta) y += beta->data()[j];
            out[r * c + j] = y;
        }
    }
    std::vector<Tensor> inputs{x};
    if (gamma) inputs.push_back(*gamma);
    if (beta) inputs.push_back(*beta);
    const bool has_gamma = gamma.has_value();
    const bool has_beta = beta.has_value();
    return finish(x.shape(), std::move(out), "layer_norm", std::move(inputs),
                  [rows, c, xhat, inv_std, has_gamma, has_beta](TensorNode& self) {
                      const Buffer& g = self.grad;
                      TensorNode* px = grad_target(self, 0);
                      TensorNode* pg = has_gamma ? grad_target(self, 1) : nullptr;
                      TensorNode* pbeta = has_beta ? grad_target(self, has_gamma ? 2 : 1) : nullptr;
                      const double* gam = has_gamma ? self.parents[1]->data.data() : nullptr;
                      Buffer dxhat(c);
                      for (std::size_t r = 0; r < rows; ++r) {
                          const double* gr = g.data() + r * c;
                          const double* hr = xhat->data() + r * c;
                          if (pg) {
                              Buffer& gg = pg->grad_buffer();
                              for (std::size_t j = 0; j < c; ++j) gg[j] += gr[j] * hr[j];
                          }
                          if (pbeta) {
                              Buffer& gb = pbeta->grad_buffer();
                              for (std::size_t j = 0; j < c; ++j) gb[j] += gr[j];
                          }
                          if (!px) continue;
                          double mean_d = 0.0, mean_dh = 0.0;
                          for (std::size_t j = 0; j < c; ++j) {
                              dxhat[j] = gam ? gr[j] * gam[j] : gr[j];
                              mean_d += dxhat[j];
                              mean_dh += dxhat[j] * hr[j];
                          }
                          mean_d /= static_cast<double>(c);
                          mean_dh /= static_cast<double>(c);
                          Buffer& gx = px->grad_buffer();
                          const double is = (*inv_std)[r];
                          for (std::size_t j = 0; j < c; ++j) {
                              gx[r * c + j] += is * (dxhat[j] - mean_d - hr[j] * mean_dh);
                          }
                      }
                  });
}

Tensor depthwise_conv3x3(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
    if (x.dim() != 4) bad_shape("depthwise_conv3x3", x.shape(), "expected [B,H,W,C]");
    const std::size_t nb = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
    if (weight.shape() != Shape{3, 3, c}) shape_mismatch("depthwise_conv3x3", x.shape(), weight.shape());
    if (bias && bias->shape() != Shape{c}) shape_mismatch("depthwise_conv3x3", x.shape(), bias->shape());
    const auto xv = x.data();
    const auto wv = weight.data();
    Buffer out(xv.size(), 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                double* o = out.data() + ((b * h + y) * w + xx) * c;
                if (bias) std::copy(bias->data().begin(), bias->data().end(), o);
                for (std::size_t dy = 0; dy < 3; ++dy) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - 1;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t dx = 0; dx < 3; ++dx) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + dx) - 1;
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                        const double* in = xv.data() + ((b * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)) * c;
                        const double* k = wv.data() + (dy * 3 + dx) * c;
                        for (std::size_t ch = 0; ch < c; ++ch) o[ch] += in[ch] * k[ch];
                    }
                }
            }
        }
    }
    std::vector<Tensor> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    const bool has_bias = bias.has_value();
    return finish(x.shape(), std::move(out), "depthwise_conv3x3", std::move(inputs),
                  [nb, h, w, c, has_bias](TensorNode& self) {
                      const Buffer& g = self.grad;
                      const Buffer& xv = self.parents[0]->data;
                      const Buffer& wv = self.parents[1]->data;
                      TensorNode* px = grad_target(self, 0);
                      TensorNode* pw = grad_target(self, 1);
                      TensorNode* pbias = has_bias ? grad_target(self, 2) : nullptr;
                      double* gx = px ? px->grad_buffer().data() : nullptr;
                      double* gw = pw ? pw->grad_buffer().data() : nullptr;
                      double* gb = pbias ? pbias->grad_buffer().data() : nullptr;
                      for (std::size_t b = 0; b < nb; ++b) {
                          for (std::size_t y = 0; y < h; ++y) {
                              for (std::size_t xx = 0; xx < w; ++xx) {
                                  const double* go = g.data() + ((b * h + y) * w + xx) * c;
                                  if (gb) {
                                      for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += go[ch];
                                  }
                                  for (std::size_t dy = 0; dy < 3; ++dy) {
                                      const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - 1;
                                      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                                      for (std::size_t dx = 0; dx < 3; ++dx) {
                                          const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + dx) - 1;
                                          if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                                          const std::size_t in_off =
                                              ((b * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)) * c;
                                          const std::size_t k_off = (dy * 3 + dx) * c;
                                          for (std::size_t ch = 0; ch < c; ++ch) {
                                              if (gx) gx[in_off + ch] += go[ch] * wv[k_off + ch];
                                              if (gw) gw[k_off + ch] += go[ch] * xv[in_off + ch];
                                          }
                                      }
                                  }
                              }
                          }
                      }
                  });
}

namespace {

struct ConvGeometry {
    std::size_t nb, h, w, cin, cout, k, stride, pad, oh, ow;
    std::size_t rows() const { return nb * oh * ow; }
    std::size_t patch() const { return k * k * cin; }
};

Buffer im2col(const double* x, const ConvGeometry& g) {
    Buffer cols(g.rows() * g.patch(), 0.0);
    for (std::size_t b = 0; b < g.nb; ++b) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                double* row = cols.data() + ((b * g.oh + oy) * g.ow + ox) * g.patch();
                for (std::size_t ky = 0; ky < g.k; ++ky) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    for (std::size_t kx = 0; kx < g.k; ++kx) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.w)) continue;
                        const double* src = x + ((b * g.h + static_cast<std::size_t>(sy)) * g.w + static_cast<std::size_t>(sx)) * g.cin;
                        std::copy(src, src + g.cin, row + (ky * g.k + kx) * g.cin);
                    }
                }
            }
        }
    }
    return cols;
}

void col2im_accumulate(const double* cols, const ConvGeometry& g, double* gx) {
    for (std::size_t b = 0; b < g.nb; ++b) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const double* row = cols + ((b * g.oh + oy) * g.ow + ox) * g.patch();
                for (std::size_t ky = 0; ky < g.k; ++ky) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    for (std::size_t kx = 0; kx < g.k; ++kx) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.w)) continue;
                        double* dst = gx + ((b * g.h + static_cast<std::size_t>(sy)) * g.w + static_cast<std::size_t>(sx)) * g.cin;
                        const double* src = row + (ky * g.k + kx) * g.cin;
                        for (std::size_t ch = 0; ch < g.cin; ++ch) dst[ch] += src[ch];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t padding) {
    if (x.dim() != 4) bad_shape("conv2d", x.shape(), "expected [B,H,W,C]");
    if (weight.dim() != 4 || weight.size(1) != weight.size(2) || weight.size(3) != x.size(3)) {
        shape_mismatch("conv2d", x.shape(), weight.shape());
    }
    if (stride == 0) bad_shape("conv2d", x.shape(), "stride must be positive");
    ConvGeometry g{x.size(0), x.size(1), x.size(2), x.size(3), weight.size(0), weight.size(1), stride, padding, 0, 0};
    if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) bad_shape("conv2d", x.shape(), "input smaller than kernel");
    g.oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
    g.ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;
    if (bias && bias->shape() != Shape{g.cout}) shape_mismatch("conv2d", weight.shape(), bias->shape());

    auto cols = std::make_shared<Buffer>(im2col(x.data().data(), g));
    const Buffer wt = transposed(weight.data().data(), g.cout, g.patch());
    Buffer out(g.rows() * g.cout);
    gemm(g.rows(), g.cout, g.patch(), cols->data(), wt.data(), out.data(), false);
    if (bias) {
        for (std::size_t r = 0; r < g.rows(); ++r) simd::add(std::span<const double>(out.data() + r * g.cout, g.cout), bias->data(), std::span<double>(out.data() + r * g.cout, g.cout));
    }
    std::vector<Tensor> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    const bool has_bias = bias.has_value();
    return finish({g.nb, g.oh, g.ow, g.cout}, std::move(out), "conv2d", std::move(inputs),
                  [g, cols, has_bias](TensorNode& self) {
                      const Buffer& go = self.grad;
                      TensorNode* px = grad_target(self, 0);
                      TensorNode* pw = grad_target(self, 1);
                      TensorNode* pb = has_bias ? grad_target(self, 2) : nullptr;
                      if (pb) {
                          Buffer& gb = pb->grad_buffer();
                          for (std::size_t r = 0; r < g.rows(); ++r) {
                              for (std::size_t o = 0; o < g.cout; ++o) gb[o] += go[r * g.cout + o];
                          }
                      }
                      if (pw) {
                          const Buffer got = transposed(go.data(), g.rows(), g.cout);
                          gemm(g.cout, g.patch(), g.rows(), got.data(), cols->data(), pw->grad_buffer().data(), true);
                      }
                      if (px) {
                          Buffer dcols(g.rows() * g.patch());
                          gemm(g.rows(), g.patch(), g.cout, go.data(), self.parents[1]->data.data(), dcols.data(), false);
                          col2im_accumulate(dcols.data(), g, px->grad_buffer().data());
                      }
                  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
    if (weight.dim() != 2 || x.shape().back() != weight.size(0)) shape_mismatch("linear", x.shape(), weight.shape());
    const std::size_t in = weight.size(0), out_dim = weight.size(1);
    if (bias && bias->shape() != Shape{out_dim}) shape_mismatch("linear", weight.shape(), bias->shape());
    const std::size_t rows = x.numel() / in;
    Buffer out(rows * out_dim);
    if (bias) {
        for (std::size_t r = 0; r < rows; ++r) std::copy(bias->data().begin(), bias->data().end(), out.begin() + static_cast<std::ptrdiff_t>(r * out_dim));
    }
    gemm(rows, out_dim, in, x.data().data(), weight.data().data(), out.data(), bias.has_value());
    Shape out_shape = x.shape();
    out_shape.back() = out_dim;
    std::vector<Tensor> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    const bool has_bias = bias.has_value();
    return finish(std::move(out_shape), std::move(out), "linear", std::move(inputs),
                  [rows, in, out_dim, has_bias](TensorNode& self) {
                      const Buffer& g = self.grad;
                      TensorNode* px = grad_target(self, 0);
                      TensorNode* pw = grad_target(self, 1);
                      TensorNode* pb = has_bias ? grad_target(self, 2) : nullptr;
                      if (px) {
                          const Buffer wt = transposed(self.parents[1]->data.data(), in, out_dim);
                          gemm(rows, in, out_dim, g.data(), wt.data(), px->grad_buffer().data(), true);
                      }
                      if (pw) {
                          const Buffer xt = transposed(self.parents[0]->data.data(), rows, in);
                          gemm(in, out_dim, rows, xt.data(), g.data(), pw->grad_buffer().data(), true);
                      }
                      if (pb) {
                          Buffer& gb = pb->grad_buffer();
                          for (std::size_t r = 0; r < rows; ++r) {
                              simd::axpy(1.0, std::span<const double>(g.data() + r * out_dim, out_dim), gb);
                          }
                      }
                  });
}

Tensor relu(const Tensor& x) {
    return unary("relu", x, [](double v) { return v < 0 ? 0.0 : v; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& x) {
    return unary("silu", x, [](double v) { return v * sigmoid_value(v); },
                 [](double v, double) {
                     const double s = sigmoid_value(v);
                     return s * (1.0 + v * (1.0 - s));
                 });
}

Tensor sigmoid(const Tensor& x) {
    return unary("sigmoid", x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
    return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor softplus(const Tensor& x) {
    return unary("softplus", x, [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
                 [](double v, double) { return sigmoid_value(v); });
}

Tensor mean(const Tensor& x, std::vector<std::size_t> axes) { return reduce("mean", x, std::move(axes), true); }
Tensor sum(const Tensor& x, std::vector<std::size_t> axes) { return reduce("sum", x, std::move(axes), false); }

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) bad_shape("concat", first, "axis " + std::to_string(axis) + " out of range");
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const Tensor& p : parts) {
        if (p.dim() != first.size()) shape_mismatch("concat", first, p.shape());
        for (std::size_t i = 0; i < first.size(); ++i) {
            if (i != axis && p.size(i) != first[i]) shape_mismatch("concat", first, p.shape());
        }
        out_shape[axis] += p.size(axis);
    }
    const AxisSplit s = split_at(out_shape, axis);
    std::vector<std::size_t> chunks;
    for (const Tensor& p : parts) chunks.push_back(p.size(axis) * s.inner);
    const std::size_t row = s.extent * s.inner;
    Buffer out(shape_numel(out_shape));
    std::size_t col = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto pv = parts[pi].data();
        for (std::size_t o = 0; o < s.outer; ++o) {
            std::copy_n(pv.data() + o * chunks[pi], chunks[pi], out.data() + o * row + col);
        }
        col += chunks[pi];
    }
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return finish(std::move(out_shape), std::move(out), "concat", std::move(inputs), [s, chunks, row](TensorNode& self) {
        std::size_t col = 0;
        for (std::size_t pi = 0; pi < chunks.size(); ++pi) {
            if (TensorNode* p = grad_target(self, pi)) {
                Buffer& gp = p->grad_buffer();
                for (std::size_t o = 0; o < s.outer; ++o) {
                    for (std::size_t j = 0; j < chunks[pi]; ++j) gp[o * chunks[pi] + j] += self.grad[o * row + col + j];
                }
            }
            col += chunks[pi];
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape.empty() || shape_numel(shape) != x.numel()) shape_mismatch("reshape", x.shape(), shape);
    return finish(std::move(shape), x.to_vector(), "reshape", {x}, [](TensorNode& self) {
        if (TensorNode* px = grad_target(self, 0)) simd::axpy(1.0, self.grad, px->grad_buffer());
    });
}

Tensor transpose(const Tensor& x, std::vector<std::size_t> perm) {
    if (perm.size() != x.dim()) bad_shape("transpose", x.shape(), "permutation rank mismatch");
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t p : perm) {
        if (p >= perm.size() || seen[p]) bad_shape("transpose", x.shape(), "not a permutation");
        seen[p] = true;
    }
    Shape out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = x.size(perm[i]);
    // Source offset for each output element: walk the output with the
    // permuted input strides.
    const auto in_strides = row_major_strides(x.shape());
    std::vector<std::size_t> strides(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) strides[i] = in_strides[perm[i]];
    const std::size_t total = x.numel();
    auto src = std::make_shared<std::vector<std::size_t>>(total);
    std::vector<std::size_t> index(perm.size(), 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        (*src)[flat] = offset;
        for (std::size_t ax = perm.size(); ax-- > 0;) {
            ++index[ax];
            offset += strides[ax];
            if (index[ax] < out_shape[ax]) break;
            offset -= strides[ax] * out_shape[ax];
            index[ax] = 0;
        }
    }
    const auto xv = x.data();
    Buffer out(total);
    for (std::size_t i = 0; i < total; ++i) out[i] = xv[(*src)[i]];
    return finish(std::move(out_shape), std::move(out), "transpose", {x}, [src](TensorNode& self) {
        TensorNode* px = grad_target(self, 0);
        if (!px) return;
        Buffer& gx = px->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[(*src)[i]] += self.grad[i];
    });
}

Tensor transpose_last2(const Tensor& x) {
    if (x.dim() < 2) bad_shape("transpose", x.shape(), "need at least 2 axes");
    std::vector<std::size_t> perm(x.dim());
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[x.dim() - 1], perm[x.dim() - 2]);
    return transpose(x, std::move(perm));
}

Tensor dropout(const Tensor& x, double rate, bool train, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) bad_shape("dropout", x.shape(), "rate must be in [0,1)");
    if (!train || rate == 0.0) return reshape(x, x.shape());
    const double keep_scale = 1.0 / (1.0 - rate);
    std::bernoulli_distribution keep(1.0 - rate);
    auto mask = std::make_shared<Buffer>(x.numel());
    for (double& m : *mask) m = keep(rng) ? keep_scale : 0.0;
    Buffer out(x.numel());
    simd::mul(x.data(), *mask, out);
    return finish(x.shape(), std::move(out), "dropout", {x}, [mask](TensorNode& self) {
        TensorNode* px = grad_target(self, 0);
        if (!px) return;
        Buffer& gx = px->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * (*mask)[i];
    });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) shape_mismatch("mse_loss", pred.shape(), target.shape());
    const Tensor diff = sub(pred, target);
    return mean(mul(diff, diff));
}

}  // namespace esiqa::ops
