#include "fedbal/layers.hpp"

#include <cmath>
#include <string>

#include "fedbal/error.hpp"

namespace fedbal {

Activation activation_from_name(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "linear") return Activation::linear;
    throw ConfigError("unknown activation: " + std::string(name));
}

std::string_view activation_name(Activation act) {
    switch (act) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
    }
    return "linear";
}

namespace {

Tensor apply_activation(const Tensor& pre, Activation act) {
    switch (act) {
    case Activation::relu: return relu(pre);
    case Activation::sigmoid: return sigmoid(pre);
    case Activation::linear: return pre;
    }
    return pre;
}

} // namespace

DenseLayer::DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act, Rng& rng)
    : in_dim_(in_dim), out_dim_(out_dim), act_(act) {
    if (in_dim == 0 || out_dim == 0) throw EngineError("DenseLayer: zero dimension");
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    Matrix w(in_dim, out_dim);
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
    weights_ = Tensor::leaf(std::move(w));
    bias_ = Tensor::leaf(Matrix(1, out_dim, 0.0));
}

DenseLayer::DenseLayer(Matrix weights, Matrix bias, Activation act)
    : in_dim_(weights.rows()), out_dim_(weights.cols()), act_(act) {
    if (in_dim_ == 0 || out_dim_ == 0) throw EngineError("DenseLayer: zero dimension");
    if (bias.rows() != 1 || bias.cols() != out_dim_)
        throw EngineError("DenseLayer: bias must be 1 x out_dim");
    weights_ = Tensor::leaf(std::move(weights));
    bias_ = Tensor::leaf(std::move(bias));
}

Tensor DenseLayer::forward(const Tensor& input, bool, Rng*) {
    if (input.cols() != in_dim_) throw EngineError("DenseLayer: input width mismatch");
    return apply_activation(add_rowvec(matmul(input, weights_), bias_), act_);
}

std::pair<std::uint32_t, std::uint32_t> DenseLayer::blob_shape() const {
    return {static_cast<std::uint32_t>(in_dim_), static_cast<std::uint32_t>(out_dim_)};
}

void DenseLayer::write_payload(std::vector<double>& out) const {
    const auto& w = weights_.value().values();
    out.insert(out.end(), w.begin(), w.end());
    const auto& b = bias_.value().values();
    out.insert(out.end(), b.begin(), b.end());
}

void DenseLayer::read_payload(const double* data, std::size_t count) {
    if (count != payload_size()) throw EngineError("DenseLayer: payload size mismatch");
    auto& w = weights_.mutable_value().values();
    std::copy(data, data + w.size(), w.begin());
    auto& b = bias_.mutable_value().values();
    std::copy(data + w.size(), data + count, b.begin());
}

BatchNormLayer::BatchNormLayer(std::size_t dim, double momentum, double epsilon)
    : dim_(dim), momentum_(momentum), epsilon_(epsilon) {
    if (dim == 0) throw EngineError("BatchNormLayer: zero dimension");
    if (momentum <= 0.0 || momentum >= 1.0)
        throw EngineError("BatchNormLayer: momentum must be in (0,1)");
    if (epsilon <= 0.0) throw EngineError("BatchNormLayer: epsilon must be positive");
    gamma_ = Tensor::leaf(Matrix(1, dim, 1.0));
    beta_ = Tensor::leaf(Matrix(1, dim, 0.0));
    running_mean_ = Matrix(1, dim, 0.0);
    running_var_ = Matrix(1, dim, 1.0);
}

Tensor BatchNormLayer::forward(const Tensor& input, bool training, Rng*) {
    if (input.cols() != dim_) throw EngineError("BatchNormLayer: input width mismatch");
    const std::size_t n = input.rows();
    if (n == 0) throw EngineError("BatchNormLayer: empty batch");

    if (training) {
        const double inv_n = 1.0 / static_cast<double>(n);
        Tensor mean = scalar_mul(col_sum(input), inv_n);
        Tensor centered = sub(input, broadcast_rows(mean, n));
        Tensor var = scalar_mul(col_sum(mul(centered, centered)), inv_n);
        Tensor denom = sqrt(scalar_add(var, epsilon_));
        Tensor normalized = div(centered, broadcast_rows(denom, n));

        for (std::size_t c = 0; c < dim_; ++c) {
            running_mean_.at(0, c) =
                momentum_ * running_mean_.at(0, c) + (1.0 - momentum_) * mean.value().at(0, c);
            running_var_.at(0, c) =
                momentum_ * running_var_.at(0, c) + (1.0 - momentum_) * var.value().at(0, c);
        }
        return add_rowvec(mul_rowvec(normalized, gamma_), beta_);
    }

    Matrix denom(1, dim_);
    for (std::size_t c = 0; c < dim_; ++c)
        denom.at(0, c) = std::sqrt(running_var_.at(0, c) + epsilon_);
    Tensor mean_c = Tensor::constant(running_mean_);
    Tensor denom_c = Tensor::constant(std::move(denom));
    Tensor normalized = div(sub(input, broadcast_rows(mean_c, n)), broadcast_rows(denom_c, n));
    return add_rowvec(mul_rowvec(normalized, gamma_), beta_);
}

std::pair<std::uint32_t, std::uint32_t> BatchNormLayer::blob_shape() const {
    return {4, static_cast<std::uint32_t>(dim_)};
}

void BatchNormLayer::write_payload(std::vector<double>& out) const {
    const auto append = [&out](const Matrix& m) {
        out.insert(out.end(), m.values().begin(), m.values().end());
    };
    append(gamma_.value());
    append(beta_.value());
    append(running_mean_);
    append(running_var_);
}

void BatchNormLayer::read_payload(const double* data, std::size_t count) {
    if (count != payload_size()) throw EngineError("BatchNormLayer: payload size mismatch");
    std::copy(data, data + dim_, gamma_.mutable_value().values().begin());
    std::copy(data + dim_, data + 2 * dim_, beta_.mutable_value().values().begin());
    std::copy(data + 2 * dim_, data + 3 * dim_, running_mean_.values().begin());
    std::copy(data + 3 * dim_, data + 4 * dim_, running_var_.values().begin());
}

GaussianNoiseLayer::GaussianNoiseLayer(double stddev) : stddev_(stddev) {
    if (stddev < 0.0) throw EngineError("GaussianNoiseLayer: negative stddev");
}

Tensor GaussianNoiseLayer::forward(const Tensor& input, bool training, Rng* rng) {
    // Identity when inactive; draws nothing from the stream in that case.
    if (!training || stddev_ == 0.0) return input;
    if (!rng) throw EngineError("GaussianNoiseLayer: training forward needs an rng");
    Matrix noise(input.rows(), input.cols());
    for (double& v : noise.values()) v = rng->gaussian(0.0, stddev_);
    return add(input, Tensor::constant(std::move(noise)));
}

void GaussianNoiseLayer::read_payload(const double*, std::size_t count) {
    if (count != 0) throw EngineError("GaussianNoiseLayer: unexpected payload");
}

void Network::add(std::unique_ptr<Layer> layer) {
    if (!layer) throw EngineError("Network: null layer");
    const std::size_t in = layer->input_dim();
    if (tail_dim_ != 0 && in != 0 && in != tail_dim_)
        throw EngineError("Network: layer input width does not chain");
    if (layer->output_dim() != 0) tail_dim_ = layer->output_dim();
    layers_.push_back(std::move(layer));
}

std::size_t Network::input_dim() const {
    for (const auto& l : layers_)
        if (l->input_dim() != 0) return l->input_dim();
    return 0;
}

std::size_t Network::output_dim() const {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
        if ((*it)->output_dim() != 0) return (*it)->output_dim();
    return 0;
}

Tensor Network::forward_t(const Tensor& input, Rng* rng) {
    if (layers_.empty()) throw EngineError("Network: no layers");
    Tensor x = input;
    for (auto& layer : layers_) x = layer->forward(x, training_, rng);
    last_output_ = x;
    return x;
}

Matrix Network::forward(const Matrix& batch, Rng* rng) {
    return forward_t(Tensor::constant(batch), rng).value();
}

const Tensor& Network::last_output() const {
    if (!last_output_.defined()) throw EngineError("Network: no recorded forward pass");
    return last_output_;
}

std::vector<Tensor> Network::parameters() {
    std::vector<Tensor> out;
    for (auto& layer : layers_)
        for (auto& p : layer->params()) out.push_back(p);
    return out;
}

std::size_t Network::parameter_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers_) total += layer->trainable_size();
    return total;
}

std::vector<Matrix> backward(Network& net, const Matrix& loss_grad) {
    const Tensor& out = net.last_output();
    if (!out.value().same_shape(loss_grad))
        throw EngineError("backward: loss gradient shape mismatch");
    Tensor weighted = mul(out, Tensor::constant(loss_grad));
    Tensor total = sum_all(weighted);
    std::vector<Tensor> params = net.parameters();
    std::vector<Tensor> grads = gradients(total, params);
    std::vector<Matrix> result;
    result.reserve(grads.size());
    for (const auto& g : grads) result.push_back(g.value());
    return result;
}

Matrix input_gradient(Network& net, const Matrix& batch) {
    if (net.output_dim() != 1)
        throw EngineError("input_gradient: network output width must be 1");
    Tensor probe = Tensor::leaf(batch);
    Tensor out = net.forward_t(probe);
    return gradients(out, {probe})[0].value();
}

void clip_weights(Network& net, double c) {
    if (c <= 0.0) throw EngineError("clip_weights: c must be positive");
    for (auto& p : net.parameters())
        for (double& v : p.mutable_value().values()) {
            if (v < -c) v = -c;
            if (v > c) v = c;
        }
}

} // namespace fedbal
