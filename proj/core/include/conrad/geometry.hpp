#pragma once

#include "conrad/tensor.hpp"
#include "conrad/types.hpp"

namespace conrad {

/// Per-sample lp norms of a rank-4 perturbation, one value per leading index.
Tensor lp_norms(const Tensor& delta, Norm p);

/// Euclidean projection of each sample of delta onto the lp ball of radius
/// epsilon. Inputs already inside the ball pass through unchanged.
///   p = inf : elementwise clamp to [-epsilon, epsilon]
///   p = 2   : radial rescaling
///   p = 1   : exact sorting-based projection (Duchi et al. simplex method)
Tensor project_lp(const Tensor& delta, Norm p, double epsilon);

/// Clamp every pixel to [0,1].
ImageBatch clip_to_image(ImageBatch batch);

}  // namespace conrad
