#include "fedbal/losses.hpp"

#include <cmath>

#include "fedbal/error.hpp"

namespace fedbal {

double bce_loss(const Matrix& predictions, const Matrix& targets) {
    if (!predictions.same_shape(targets)) throw EngineError("bce_loss: shape mismatch");
    if (predictions.size() == 0) throw EngineError("bce_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double p = predictions.values()[i];
        if (p < kProbEps) p = kProbEps;
        if (p > 1.0 - kProbEps) p = 1.0 - kProbEps;
        const double t = targets.values()[i];
        sum += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    }
    return sum * (1.0 / static_cast<double>(predictions.size()));
}

Tensor bce_loss_t(const Tensor& predictions, const Matrix& targets) {
    if (!predictions.value().same_shape(targets)) throw EngineError("bce_loss: shape mismatch");
    if (targets.size() == 0) throw EngineError("bce_loss: empty input");
    Tensor p = clamp(predictions, kProbEps, 1.0 - kProbEps);
    Tensor t = Tensor::constant(targets);
    Matrix one_minus_t(targets.rows(), targets.cols());
    for (std::size_t i = 0; i < targets.size(); ++i)
        one_minus_t.values()[i] = 1.0 - targets.values()[i];
    Tensor tc = Tensor::constant(std::move(one_minus_t));
    Tensor term = add(mul(t, log(p)), mul(tc, log(scalar_add(neg(p), 1.0))));
    return neg(mean_all(term));
}

} // namespace fedbal
