#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "fedbal/autodiff.hpp"

namespace fedbal {

enum class OptimizerKind { sgd_momentum, adam, rmsprop };

OptimizerKind optimizer_kind_from_name(std::string_view name);
std::string_view optimizer_kind_name(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd_momentum;
    double learning_rate = 0.001;
    double momentum = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double rho = 0.9;
    double epsilon = 1e-7;
};

/// Per-parameter accumulator state lives inside; one instance per trained
/// network so the update recurrences carry across steps.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg);

    static Optimizer sgd_momentum(double learning_rate, double momentum = 0.0);
    static Optimizer adam(double learning_rate);
    static Optimizer rmsprop(double learning_rate);

    void step(std::vector<Tensor>& params, const std::vector<Matrix>& grads);

    const OptimizerConfig& config() const { return cfg_; }

private:
    OptimizerConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<Matrix> slot1_;
    std::vector<Matrix> slot2_;
};

} // namespace fedbal
