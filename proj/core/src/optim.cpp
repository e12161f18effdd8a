#include "fedbal/optim.hpp"

#include <cmath>
#include <string>

#include "fedbal/error.hpp"

namespace fedbal {

OptimizerKind optimizer_kind_from_name(std::string_view name) {
    if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
    if (name == "adam") return OptimizerKind::adam;
    if (name == "rmsprop") return OptimizerKind::rmsprop;
    throw ConfigError("unknown optimizer: " + std::string(name));
}

std::string_view optimizer_kind_name(OptimizerKind kind) {
    switch (kind) {
    case OptimizerKind::sgd_momentum: return "sgd_momentum";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
    }
    return "sgd_momentum";
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
    if (cfg.learning_rate <= 0.0) throw ConfigError("optimizer: learning rate must be positive");
}

Optimizer Optimizer::sgd_momentum(double learning_rate, double momentum) {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd_momentum;
    cfg.learning_rate = learning_rate;
    cfg.momentum = momentum;
    return Optimizer(cfg);
}

Optimizer Optimizer::adam(double learning_rate) {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adam;
    cfg.learning_rate = learning_rate;
    return Optimizer(cfg);
}

Optimizer Optimizer::rmsprop(double learning_rate) {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::rmsprop;
    cfg.learning_rate = learning_rate;
    return Optimizer(cfg);
}

void Optimizer::step(std::vector<Tensor>& params, const std::vector<Matrix>& grads) {
    if (params.size() != grads.size())
        throw EngineError("optimizer step: parameter/gradient count mismatch");
    if (slot1_.empty()) {
        for (const auto& p : params) {
            slot1_.emplace_back(p.value().rows(), p.value().cols(), 0.0);
            if (cfg_.kind == OptimizerKind::adam)
                slot2_.emplace_back(p.value().rows(), p.value().cols(), 0.0);
        }
    }
    if (slot1_.size() != params.size())
        throw EngineError("optimizer step: parameter set changed between steps");

    ++t_;
    const double lr = cfg_.learning_rate;

    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& w = params[i].mutable_value();
        const Matrix& g = grads[i];
        if (!w.same_shape(g)) throw EngineError("optimizer step: gradient shape mismatch");
        check_finite(g, "optimizer step gradient");

        switch (cfg_.kind) {
        case OptimizerKind::sgd_momentum: {
            Matrix& v = slot1_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                v.values()[j] = cfg_.momentum * v.values()[j] - lr * g.values()[j];
                w.values()[j] += v.values()[j];
            }
            break;
        }
        case OptimizerKind::adam: {
            Matrix& m = slot1_[i];
            Matrix& v = slot2_[i];
            const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
            const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
            for (std::size_t j = 0; j < w.size(); ++j) {
                const double gj = g.values()[j];
                m.values()[j] = cfg_.beta1 * m.values()[j] + (1.0 - cfg_.beta1) * gj;
                v.values()[j] = cfg_.beta2 * v.values()[j] + (1.0 - cfg_.beta2) * gj * gj;
                const double mhat = m.values()[j] / bc1;
                const double vhat = v.values()[j] / bc2;
                w.values()[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
            break;
        }
        case OptimizerKind::rmsprop: {
            Matrix& v = slot1_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                const double gj = g.values()[j];
                v.values()[j] = cfg_.rho * v.values()[j] + (1.0 - cfg_.rho) * gj * gj;
                w.values()[j] -= lr * gj / (std::sqrt(v.values()[j]) + cfg_.epsilon);
            }
            break;
        }
        }
        check_finite(w, "optimizer step parameters");
    }
}

} // namespace fedbal
