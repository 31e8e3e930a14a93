#include "reswm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reswm {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Fraction of one dimension's spectral power above half-Nyquist (index N/4),
// DC excluded. Zero signal -> 0.
double high_freq_fraction(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  double total = 0, high = 0;
  for (int k = 1; k < n; ++k) {
    double re = 0, im = 0;
    for (int t = 0; t < n; ++t) {
      const double ang = kTwoPi * k * t / n;
      re += x[static_cast<size_t>(t)] * std::cos(ang);
      im -= x[static_cast<size_t>(t)] * std::sin(ang);
    }
    const double p = re * re + im * im;
    total += p;
    const int folded = std::min(k, n - k);
    if (4 * folded > n) high += p;
  }
  // Treat non-DC power at rounding-noise level (relative to the signal
  // itself) as zero so constant signals report 0 instead of noise/noise.
  double sq = 0;
  for (double v : x) sq += v * v;
  const double floor_power = 1e-18 * static_cast<double>(n) * static_cast<double>(n) * sq;
  return total > floor_power ? high / total : 0.0;
}

}  // namespace

SmoothnessReport smoothness_metrics(const std::vector<std::vector<double>>& actions,
                                    const std::vector<std::vector<double>>& residuals) {
  const size_t n = actions.size();
  if (n < 2) throw std::invalid_argument("smoothness_metrics: need at least 2 steps");
  if (residuals.size() != n)
    throw std::invalid_argument("smoothness_metrics: actions/residuals length mismatch");
  const size_t adim = actions[0].size();
  if (adim == 0) throw std::invalid_argument("smoothness_metrics: empty action vectors");

  SmoothnessReport rep;
  for (size_t t = 0; t < n; ++t) {
    if (actions[t].size() != adim || residuals[t].size() != adim)
      throw std::invalid_argument("smoothness_metrics: ragged action dimensions");
    for (size_t i = 0; i < adim; ++i) {
      const double prev = t == 0 ? 0.0 : actions[t - 1][i];
      rep.mean_abs_delta += std::abs(actions[t][i] - prev);
      rep.energy += actions[t][i] * actions[t][i];
      rep.residual_energy += residuals[t][i] * residuals[t][i];
    }
  }
  rep.mean_abs_delta /= static_cast<double>((n - 1) * adim);
  rep.energy /= static_cast<double>(n);
  rep.residual_energy /= static_cast<double>(n);

  std::vector<double> dim(n);
  for (size_t i = 0; i < adim; ++i) {
    for (size_t t = 0; t < n; ++t) dim[t] = actions[t][i];
    rep.high_freq_ratio += high_freq_fraction(dim);
  }
  rep.high_freq_ratio /= static_cast<double>(adim);
  return rep;
}

AttentionMap attention_map(const WorldModel& model, const Frame& o_t, const Frame& o_prev,
                           bool diff_variant) {
  Tensor act = model.conv_activation(frame_tensor(o_t));
  if (diff_variant) {
    Tensor prev = model.conv_activation(frame_tensor(o_prev), /*second=*/true);
    act = sub(act, prev);
  }
  const int c = act.dim(1), h = act.dim(2), w = act.dim(3);
  AttentionMap map;
  map.height = h;
  map.width = w;
  map.weights.assign(static_cast<size_t>(h) * w, 0.0);
  for (int ch = 0; ch < c; ++ch)
    for (int p = 0; p < h * w; ++p)
      map.weights[static_cast<size_t>(p)] += std::abs(static_cast<double>(act[ch * h * w + p]));
  double peak = map.weights[0];
  for (double v : map.weights) peak = std::max(peak, v);
  double z = 0;
  for (double& v : map.weights) {
    v = std::exp(v / static_cast<double>(c) - peak / static_cast<double>(c));
    z += v;
  }
  for (double& v : map.weights) v /= z;
  return map;
}

double normalized_score(double score, double random_ref, double human_ref) {
  if (human_ref == random_ref)
    throw std::invalid_argument("normalized_score: reference scores coincide");
  return (score - random_ref) / (human_ref - random_ref);
}

double normalized_mean(const std::vector<double>& scores, const std::vector<double>& random_refs,
                       const std::vector<double>& human_refs) {
  const size_t n = scores.size();
  if (n == 0 || random_refs.size() != n || human_refs.size() != n)
    throw std::invalid_argument("normalized_mean: mismatched or empty inputs");
  double acc = 0;
  for (size_t i = 0; i < n; ++i) acc += normalized_score(scores[i], random_refs[i], human_refs[i]);
  return acc / static_cast<double>(n);
}

double normalized_median(const std::vector<double>& scores, const std::vector<double>& random_refs,
                         const std::vector<double>& human_refs) {
  const size_t n = scores.size();
  if (n == 0 || random_refs.size() != n || human_refs.size() != n)
    throw std::invalid_argument("normalized_median: mismatched or empty inputs");
  std::vector<double> vals(n);
  for (size_t i = 0; i < n; ++i)
    vals[i] = normalized_score(scores[i], random_refs[i], human_refs[i]);
  std::sort(vals.begin(), vals.end());
  return n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

}  // namespace reswm
