#include "esiqa/model/ssd.hpp"

#include <cmath>
#include <string>

#include "esiqa/tensor/ops.hpp"

namespace esiqa::model {

namespace {

void check_params(std::span<const double> x, std::size_t width, const SsdParams& p) {
    const std::size_t len = p.a.size();
    if (len == 0) throw ShapeError("ssd: empty sequence");
    if (width == 0 || x.size() != len * width) {
        throw ShapeError("ssd: value extents " + std::to_string(x.size()) + " do not match length " + std::to_string(len) +
                         " x width " + std::to_string(width));
    }
    if (p.delta.size() != len || p.b.size() != len * p.state_size || p.c.size() != len * p.state_size) {
        throw ShapeError("ssd: parameter extents do not match token count " + std::to_string(len));
    }
}

}  // namespace

std::vector<double> ssd_recurrent(std::span<const double> x, std::size_t width, const SsdParams& p) {
    check_params(x, width, p);
    const std::size_t len = p.length(), n = p.state_size;
    std::vector<double> h(n * width, 0.0);  // [N,P]
    std::vector<double> y(len * width, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
        const double* bt = p.b.data() + t * n;
        const double* ct = p.c.data() + t * n;
        const double* xt = x.data() + t * width;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < width; ++j) {
                h[i * width + j] = p.a[t] * h[i * width + j] + bt[i] * p.delta[t] * xt[j];
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < width; ++j) y[t * width + j] += ct[i] * h[i * width + j];
        }
    }
    return y;
}

std::vector<double> ssd_interaction_matrix(const SsdParams& p) {
    const std::size_t len = p.length(), n = p.state_size;
    std::vector<double> m(len * len, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
        double decay = 1.0;  // prod_{r=s+1..t} a_r, built as s walks down from t
        for (std::size_t s = t + 1; s-- > 0;) {
            double cb = 0.0;
            for (std::size_t i = 0; i < n; ++i) cb += p.c[t * n + i] * p.b[s * n + i];
            m[t * len + s] = cb * decay * p.delta[s];
            decay *= p.a[s];
        }
    }
    return m;
}

std::vector<double> ssd_dual(std::span<const double> x, std::size_t width, const SsdParams& p) {
    check_params(x, width, p);
    const std::size_t len = p.length();
    const auto m = ssd_interaction_matrix(p);
    std::vector<double> y(len * width, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t s = 0; s <= t; ++s) {
            const double w = m[t * len + s];
            for (std::size_t j = 0; j < width; ++j) y[t * width + j] += w * x[s * width + j];
        }
    }
    return y;
}

double delta_from_raw(double raw) { return raw > 30.0 ? raw : std::log1p(std::exp(raw)); }

double gate_from_raw(double delta, double log_rate) { return std::exp(-delta * std::exp(log_rate)); }

Tensor nc_ssd_mix(const Tensor& x, const Tensor& gate, const Tensor& delta, const Tensor& b, const Tensor& c) {
    if (x.dim() != 4) throw ShapeError("nc_ssd: value path must be [B,T,H,P], got " + shape_str(x.shape()));
    const std::size_t nb = x.size(0), nt = x.size(1), nh = x.size(2);
    const Shape scalar_shape{nb, nt, nh};
    if (gate.shape() != scalar_shape || delta.shape() != scalar_shape) {
        throw ShapeError("nc_ssd: gate/delta extents " + shape_str(gate.shape()) + " vs value path " + shape_str(x.shape()));
    }
    if (b.dim() != 4 || b.shape() != c.shape() || b.size(0) != nb || b.size(1) != nt || b.size(2) != nh) {
        throw ShapeError("nc_ssd: B/C extents " + shape_str(b.shape()) + " vs value path " + shape_str(x.shape()));
    }
    const Tensor weight = ops::reshape(ops::mul(gate, delta), {nb, nt, nh, 1});
    const Tensor weighted = ops::transpose(ops::mul(x, weight), {0, 2, 1, 3});  // [B,H,T,P]
    const Tensor bt = ops::transpose(b, {0, 2, 3, 1});                           // [B,H,N,T]
    const Tensor state = ops::bmm(bt, weighted);                                 // [B,H,N,P]
    const Tensor ct = ops::transpose(c, {0, 2, 1, 3});                           // [B,H,T,N]
    const Tensor y = ops::bmm(ct, state);                                        // [B,H,T,P]
    return ops::transpose(y, {0, 2, 1, 3});
}

}  // namespace esiqa::model
