#pragma once

#include <cstddef>
#include <vector>

#include "fedbal/layers.hpp"

namespace fedbal {

struct ClassifierSpec {
    std::size_t input_dim = 13;
    std::vector<std::size_t> hidden = {256, 128, 64, 32};
    bool noise_layer = true;
    double noise_stddev = 0.01;
};

/// Relu hidden stack with an optional Gaussian-noise layer after the first
/// dense layer, sigmoid output unit.
Network make_classifier(const ClassifierSpec& spec, Rng& rng);

/// Relu hidden stack, sigmoid output of width feature_dim.
Network make_generator(std::size_t latent_dim, std::size_t feature_dim,
                       const std::vector<std::size_t>& hidden, Rng& rng);

/// Relu hidden stack with optional batch-norm after the first dense layer;
/// sigmoid scalar output for the probability form, linear for the critic.
Network make_discriminator(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                           bool batchnorm, bool sigmoid_out, Rng& rng);

} // namespace fedbal
