#pragma once

// State-space sequence mixing.
//
// The causal pair (`ssd_recurrent`, `ssd_dual`) computes the same map two
// ways: a linear recurrence over a hidden state and a masked token-by-token
// interaction matrix. They operate on plain arrays for a single head and
// serve as mutual oracles.
//
// `nc_ssd_mix` is the non-causal, position-independent variant used inside
// the vision blocks: every token writes into one shared state
//     H = sum_t a_t * delta_t * B_t x_t^T
// and reads it back with y_t = C_t^T H.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "esiqa/tensor/tensor.hpp"

namespace esiqa::model {

/// Per-token parameters of a single-head SSD over a length-L sequence.
struct SsdParams {
    std::size_t state_size = 1;  // N
    std::vector<double> a;       // [L], transition gate, in (0,1] after activation
    std::vector<double> b;       // [L,N], input projection
    std::vector<double> c;       // [L,N], output projection
    std::vector<double> delta;   // [L], positive step scale

    std::size_t length() const { return a.size(); }
};

/// x is [L,P] row-major; returns y [L,P].
/// h_t = a_t h_{t-1} + B_t (delta_t x_t), y_t = C_t^T h_t, h_0 = 0.
std::vector<double> ssd_recurrent(std::span<const double> x, std::size_t width, const SsdParams& params);

/// Same map through the L x L matrix M[t,s] = (C_t . B_s) (prod_{r=s+1..t} a_r) delta_s for s <= t.
std::vector<double> ssd_dual(std::span<const double> x, std::size_t width, const SsdParams& params);

/// The lower-triangular interaction matrix used by `ssd_dual`, [L,L].
std::vector<double> ssd_interaction_matrix(const SsdParams& params);

/// softplus(raw): strictly positive step scale.
double delta_from_raw(double raw);
/// exp(-delta * exp(log_rate)): transition gate in (0,1].
double gate_from_raw(double delta, double log_rate);

/// Tensor form of the non-causal mix.
///   x     [B,T,H,P]  value path
///   gate  [B,T,H]    a_t
///   delta [B,T,H]
///   b, c  [B,T,H,N]
/// Returns [B,T,H,P].
Tensor nc_ssd_mix(const Tensor& x, const Tensor& gate, const Tensor& delta, const Tensor& b, const Tensor& c);

}  // namespace esiqa::model
