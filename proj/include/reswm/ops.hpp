#pragma once

#include <functional>
#include <utility>

#include "reswm/tape.hpp"

namespace reswm {

// Elementwise (same shape).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Scalar-argument elementwise.
Tensor scale(const Tensor& x, Real c);
Tensor add_scalar(const Tensor& x, Real c);
Tensor maximum(const Tensor& x, Real c);

// Unary elementwise.
Tensor neg(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor inv_sqrt(const Tensor& x);

// Linear algebra on the 2-D view.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // broadcast v over rows

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor row_sum(const Tensor& x);   // [m,n] -> [m,1]
Tensor row_mean(const Tensor& x);  // [m,n] -> [m,1]

// Shape ops.
Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor bcast_col(const Tensor& v, int n);  // [m,1] -> [m,n]
Tensor bcast_row(const Tensor& v, int m);  // [n] -> [m,n]
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, int begin, int len);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int begin, int len);

// Convolutions, valid padding, square kernel/stride; spatial extents must
// tile exactly ((H - k) divisible by stride).
Tensor conv2d(const Tensor& x, const Tensor& w, int stride);            // x [N,C,H,W], w [F,C,k,k]
Tensor conv2d_transpose(const Tensor& x, const Tensor& w, int stride);  // x [N,F,h,w], w [F,C,k,k]
Tensor add_channel_bias(const Tensor& x, const Tensor& b);              // x [N,C,H,W], b [C]

// Layer normalization over the last axis: gain ⊙ (x - mean)/sqrt(var + eps) + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real epsilon);

// sample = mu + sigma ⊙ noise; log_prob [m,1] is the diagonal-Gaussian log
// density of sample; both differentiable w.r.t. mu and sigma.
std::pair<Tensor, Tensor> reparam_sample_gaussian(const Tensor& mu, const Tensor& sigma,
                                                  const Tensor& noise);

// Closed-form KL(N(mu1, diag(s1^2)) || N(mu2, diag(s2^2))) per row -> [m,1].
Tensor kl_diag_gaussian(const Tensor& mu1, const Tensor& s1, const Tensor& mu2, const Tensor& s2);

// Gradient self-check against central finite differences.
struct GradCheckReport {
  std::vector<Real> analytic;
  std::vector<Real> numeric;
  Real max_rel_err = 0;
  bool pass = false;
};
GradCheckReport check_gradients(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                                Real step, Real tolerance);

// Max scaled error between an analytic gradient of f w.r.t. param and central
// differences (perturbs param in place; restores it).
Real fd_max_rel_err(const std::function<Real()>& f, Tensor& param, const std::vector<Real>& analytic,
                    Real step, const std::vector<int>* indices = nullptr);

}  // namespace reswm
