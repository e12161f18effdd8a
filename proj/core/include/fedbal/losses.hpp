#pragma once

#include "fedbal/autodiff.hpp"

namespace fedbal {

inline constexpr double kProbEps = 1e-7;

/// Mean binary cross-entropy; probabilities clamped to [eps, 1-eps].
double bce_loss(const Matrix& predictions, const Matrix& targets);

/// Graph form of the same computation; `targets` enters as a constant.
Tensor bce_loss_t(const Tensor& predictions, const Matrix& targets);

} // namespace fedbal
