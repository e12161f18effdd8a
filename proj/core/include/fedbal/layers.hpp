#pragma once

#include <cstdint>
#include <memory>
#include <string_view>
#include <utility>
#include <vector>

#include "fedbal/autodiff.hpp"
#include "fedbal/rng.hpp"

namespace fedbal {

enum class Activation { relu, sigmoid, linear };

Activation activation_from_name(std::string_view name);
std::string_view activation_name(Activation act);

enum class LayerKind { dense, batchnorm, noise };

class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    /// 0 means the layer accepts/preserves whatever width it is given.
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_dim() const = 0;

    virtual Tensor forward(const Tensor& input, bool training, Rng* rng) = 0;
    /// Trainable parameters only.
    virtual std::vector<Tensor> params() = 0;
    virtual std::size_t trainable_size() const = 0;

    /// Header entry and payload for the weight blob.
    virtual std::pair<std::uint32_t, std::uint32_t> blob_shape() const = 0;
    virtual std::size_t payload_size() const = 0;
    virtual void write_payload(std::vector<double>& out) const = 0;
    virtual void read_payload(const double* data, std::size_t count) = 0;
};

class DenseLayer : public Layer {
public:
    /// Glorot-uniform weights, zero biases.
    DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act, Rng& rng);
    /// Explicit parameters; bias is 1 x out_dim.
    DenseLayer(Matrix weights, Matrix bias, Activation act);

    LayerKind kind() const override { return LayerKind::dense; }
    std::size_t input_dim() const override { return in_dim_; }
    std::size_t output_dim() const override { return out_dim_; }
    Activation activation() const { return act_; }

    Tensor forward(const Tensor& input, bool training, Rng* rng) override;
    std::vector<Tensor> params() override { return {weights_, bias_}; }
    std::size_t trainable_size() const override { return in_dim_ * out_dim_ + out_dim_; }

    std::pair<std::uint32_t, std::uint32_t> blob_shape() const override;
    std::size_t payload_size() const override { return trainable_size(); }
    void write_payload(std::vector<double>& out) const override;
    void read_payload(const double* data, std::size_t count) override;

    const Matrix& weights() const { return weights_.value(); }
    const Matrix& bias() const { return bias_.value(); }

private:
    std::size_t in_dim_ = 0;
    std::size_t out_dim_ = 0;
    Activation act_ = Activation::linear;
    Tensor weights_;
    Tensor bias_;
};

class BatchNormLayer : public Layer {
public:
    explicit BatchNormLayer(std::size_t dim, double momentum = 0.99, double epsilon = 1e-7);

    LayerKind kind() const override { return LayerKind::batchnorm; }
    std::size_t input_dim() const override { return dim_; }
    std::size_t output_dim() const override { return dim_; }

    Tensor forward(const Tensor& input, bool training, Rng* rng) override;
    std::vector<Tensor> params() override { return {gamma_, beta_}; }
    std::size_t trainable_size() const override { return 2 * dim_; }

    std::pair<std::uint32_t, std::uint32_t> blob_shape() const override;
    std::size_t payload_size() const override { return 4 * dim_; }
    void write_payload(std::vector<double>& out) const override;
    void read_payload(const double* data, std::size_t count) override;

    const Matrix& running_mean() const { return running_mean_; }
    const Matrix& running_var() const { return running_var_; }

private:
    std::size_t dim_;
    double momentum_;
    double epsilon_;
    Tensor gamma_;
    Tensor beta_;
    Matrix running_mean_;
    Matrix running_var_;
};

class GaussianNoiseLayer : public Layer {
public:
    explicit GaussianNoiseLayer(double stddev = 0.01);

    LayerKind kind() const override { return LayerKind::noise; }
    std::size_t input_dim() const override { return 0; }
    std::size_t output_dim() const override { return 0; }
    double stddev() const { return stddev_; }

    Tensor forward(const Tensor& input, bool training, Rng* rng) override;
    std::vector<Tensor> params() override { return {}; }
    std::size_t trainable_size() const override { return 0; }

    std::pair<std::uint32_t, std::uint32_t> blob_shape() const override { return {0, 0}; }
    std::size_t payload_size() const override { return 0; }
    void write_payload(std::vector<double>&) const override {}
    void read_payload(const double*, std::size_t count) override;

private:
    double stddev_;
};

/// Ordered layer stack with a training/eval mode flag. Forward passes are
/// recorded, so gradients of the most recent pass are available until the
/// next one replaces it.
class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    void add(std::unique_ptr<Layer> layer);

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }

    std::size_t input_dim() const;
    std::size_t output_dim() const;

    void set_training(bool training) { training_ = training; }
    bool training() const { return training_; }

    /// Graph-recording pass; `rng` feeds noise layers in training mode.
    Tensor forward_t(const Tensor& input, Rng* rng = nullptr);
    Matrix forward(const Matrix& batch, Rng* rng = nullptr);

    const Tensor& last_output() const;

    std::vector<Tensor> parameters();
    std::size_t parameter_count() const;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    bool training_ = false;
    std::size_t tail_dim_ = 0;
    Tensor last_output_;
};

/// Parameter gradients of sum(loss_grad * output) for the last recorded
/// forward pass, ordered as Network::parameters().
std::vector<Matrix> backward(Network& net, const Matrix& loss_grad);

/// Per-row gradient of the (single) output w.r.t. the input batch.
Matrix input_gradient(Network& net, const Matrix& batch);

/// Clamp every trainable parameter to [-c, c] in place.
void clip_weights(Network& net, double c);

} // namespace fedbal
