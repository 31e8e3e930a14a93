#pragma once

#include <vector>

#include "reswm/worldmodel.hpp"

namespace reswm {

// Control-smoothness summary of one episode. All fields are sign-free: the
// report of a trajectory and of its negation are identical.
struct SmoothnessReport {
  double mean_abs_delta = 0;   // mean |a_t - a_{t-1}| per dimension, a_{-1} = 0
  double energy = 0;           // mean ||a_t||^2
  double residual_energy = 0;  // mean ||delta_t||^2
  double high_freq_ratio = 0;  // DFT power above index N/4, dimension-averaged
};

// Requires length >= 2. The first difference uses a_{-1} = 0 and the sum of
// absolute differences is averaged over the N-1 transitions, so a constant
// sequence contributes only its initial jump from zero.
SmoothnessReport smoothness_metrics(const std::vector<std::vector<double>>& actions,
                                    const std::vector<std::vector<double>>& residuals);

// Spatial probability map over a conv feature grid; weights sum to 1.
struct AttentionMap {
  int height = 0;
  int width = 0;
  std::vector<double> weights;  // row-major, height * width
};

// Channel-mean of absolute final-conv activations followed by a spatial
// softmax. diff_variant uses the feature difference f(o_t) - f'(o_prev)
// instead of f(o_t) alone.
AttentionMap attention_map(const WorldModel& model, const Frame& o_t, const Frame& o_prev,
                           bool diff_variant);

// (score - random_ref) / (human_ref - random_ref); errors when the
// references coincide. Affine-invariant in (score, random_ref, human_ref).
double normalized_score(double score, double random_ref, double human_ref);

double normalized_mean(const std::vector<double>& scores, const std::vector<double>& random_refs,
                       const std::vector<double>& human_refs);
double normalized_median(const std::vector<double>& scores, const std::vector<double>& random_refs,
                         const std::vector<double>& human_refs);

}  // namespace reswm
