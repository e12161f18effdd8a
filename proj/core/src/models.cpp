#include "fedbal/models.hpp"

#include <memory>

#include "fedbal/error.hpp"

namespace fedbal {

Network make_classifier(const ClassifierSpec& spec, Rng& rng) {
    if (spec.input_dim == 0) throw ConfigError("classifier: input_dim must be positive");
    if (spec.hidden.empty()) throw ConfigError("classifier: need at least one hidden layer");
    Network net;
    std::size_t width = spec.input_dim;
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
        net.add(std::make_unique<DenseLayer>(width, spec.hidden[i], Activation::relu, rng));
        width = spec.hidden[i];
        if (i == 0 && spec.noise_layer)
            net.add(std::make_unique<GaussianNoiseLayer>(spec.noise_stddev));
    }
    net.add(std::make_unique<DenseLayer>(width, 1, Activation::sigmoid, rng));
    return net;
}

Network make_generator(std::size_t latent_dim, std::size_t feature_dim,
                       const std::vector<std::size_t>& hidden, Rng& rng) {
    if (latent_dim == 0 || feature_dim == 0)
        throw ConfigError("generator: dimensions must be positive");
    if (hidden.empty()) throw ConfigError("generator: need at least one hidden layer");
    Network net;
    std::size_t width = latent_dim;
    for (std::size_t h : hidden) {
        net.add(std::make_unique<DenseLayer>(width, h, Activation::relu, rng));
        width = h;
    }
    net.add(std::make_unique<DenseLayer>(width, feature_dim, Activation::sigmoid, rng));
    return net;
}

Network make_discriminator(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                           bool batchnorm, bool sigmoid_out, Rng& rng) {
    if (input_dim == 0) throw ConfigError("discriminator: input_dim must be positive");
    if (hidden.empty()) throw ConfigError("discriminator: need at least one hidden layer");
    Network net;
    std::size_t width = input_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        net.add(std::make_unique<DenseLayer>(width, hidden[i], Activation::relu, rng));
        width = hidden[i];
        if (i == 0 && batchnorm) net.add(std::make_unique<BatchNormLayer>(width));
    }
    net.add(std::make_unique<DenseLayer>(
        width, 1, sigmoid_out ? Activation::sigmoid : Activation::linear, rng));
    return net;
}

} // namespace fedbal
