#include <cmath>
#include <memory>

#include "doctest.h"
#include "fedbal/error.hpp"
#include "fedbal/layers.hpp"
#include "fedbal/losses.hpp"
#include "fedbal/models.hpp"
#include "fedbal/optim.hpp"
#include "testutil.hpp"

using namespace fedbal;
using testutil::fd_derivative;
using testutil::random_matrix;
using testutil::rel_error;

namespace {

Network identity_net() {
    Network net;
    net.add(std::make_unique<DenseLayer>(Matrix::from_rows({{1, 0}, {0, 1}}),
                                         Matrix(1, 2, 0.0), Activation::linear));
    return net;
}

// Random dense stack: relu hiddens, chosen output activation.
Network random_net(Rng& rng, std::size_t in, const std::vector<std::size_t>& hidden,
                   Activation out_act, bool batchnorm = false) {
    Network net;
    std::size_t width = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        net.add(std::make_unique<DenseLayer>(width, hidden[i], Activation::relu, rng));
        width = hidden[i];
        if (batchnorm && i == 0) net.add(std::make_unique<BatchNormLayer>(width));
    }
    net.add(std::make_unique<DenseLayer>(width, 1, out_act, rng));
    return net;
}

} // namespace

TEST_CASE("forward basics") {
    Network id = identity_net();
    Matrix out = id.forward(Matrix::from_rows({{3, -2}}));
    CHECK(out.at(0, 0) == 3);
    CHECK(out.at(0, 1) == -2);

    Network sig;
    sig.add(std::make_unique<DenseLayer>(Matrix(1, 1, 1.0), Matrix(1, 1, 0.0),
                                         Activation::sigmoid));
    CHECK(sig.forward(Matrix(1, 1, 0.0)).at(0, 0) == 0.5);

    Network rl;
    rl.add(std::make_unique<DenseLayer>(Matrix::from_rows({{1, 0}, {0, 1}}), Matrix(1, 2, 0.0),
                                        Activation::relu));
    Matrix r = rl.forward(Matrix::from_rows({{-1, 2}}));
    CHECK(r.at(0, 0) == 0);
    CHECK(r.at(0, 1) == 2);
}

TEST_CASE("layer width mismatches are rejected") {
    Rng rng(1);
    Network net;
    net.add(std::make_unique<DenseLayer>(4, 8, Activation::relu, rng));
    CHECK_THROWS_AS(net.add(std::make_unique<DenseLayer>(7, 2, Activation::relu, rng)),
                    EngineError);
    CHECK_THROWS_AS(net.forward(Matrix(1, 5)), EngineError);
}

TEST_CASE("backward requires a recorded pass and honors upstream") {
    Rng rng(2);
    Network net = random_net(rng, 3, {5}, Activation::sigmoid);
    CHECK_THROWS_AS(backward(net, Matrix(1, 1, 1.0)), EngineError);

    Matrix batch = random_matrix(4, 3, rng);
    net.forward(batch);
    auto zero = backward(net, Matrix(4, 1, 0.0));
    for (const auto& g : zero)
        for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("single linear unit chain rule") {
    Network net;
    net.add(std::make_unique<DenseLayer>(Matrix(1, 1, 0.8), Matrix(1, 1, 0.0),
                                         Activation::linear));
    net.forward(Matrix(1, 1, 2.0));
    auto grads = backward(net, Matrix(1, 1, 3.5));
    CHECK(grads[0].at(0, 0) == doctest::Approx(2.0 * 3.5));
    CHECK(grads[1].at(0, 0) == doctest::Approx(3.5));
}

TEST_CASE("backward matches finite differences on random nets") {
    Rng rng(909);
    int done = 0;
    while (done < 100) {
        const std::size_t in = 2 + rng.uniform_index(3);
        std::vector<std::size_t> hidden;
        const std::size_t depth = 1 + rng.uniform_index(2);
        for (std::size_t i = 0; i < depth; ++i) hidden.push_back(2 + rng.uniform_index(15));
        const bool bn = rng.uniform() < 0.3;
        const Activation out_act = rng.uniform() < 0.5 ? Activation::sigmoid : Activation::linear;
        Network net = random_net(rng, in, hidden, out_act, bn);
        net.set_training(true);
        Matrix batch = random_matrix(3, in, rng);
        if (testutil::relu_margin(net, batch) < 1e-3) continue;

        Matrix targets(3, 1);
        for (double& t : targets.values()) t = rng.uniform() < 0.5 ? 0.0 : 1.0;

        auto loss_value = [&]() {
            Tensor out = net.forward_t(Tensor::constant(batch));
            if (out_act == Activation::sigmoid) return bce_loss(out.value(), targets);
            double s = 0.0;
            for (double v : out.value().values()) s += v * v;
            return s / static_cast<double>(out.value().size());
        };

        Tensor out = net.forward_t(Tensor::constant(batch));
        Tensor loss;
        if (out_act == Activation::sigmoid) {
            loss = bce_loss_t(out, targets);
        } else {
            loss = mean_all(mul(out, out));
        }
        auto params = net.parameters();
        auto grads = gradients(loss, params);

        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Matrix& m = params[pi].mutable_value();
            for (std::size_t i = 0; i < m.size(); ++i) {
                const double fd = fd_derivative(loss_value, &m.values()[i]);
                const double got = grads[pi].value().values()[i];
                CHECK(testutil::fd_matches(got, fd, 1e-4));
            }
        }
        ++done;
    }
}

TEST_CASE("input gradient of linear and constant critics") {
    Matrix w = Matrix::column({0.3, -0.7, 0.4});
    Network lin;
    lin.add(std::make_unique<DenseLayer>(w, Matrix(1, 1, 0.0), Activation::linear));
    Matrix batch = Matrix::from_rows({{1, 2, 3}, {-1, 0, 5}});
    Matrix g = input_gradient(lin, batch);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(g.at(r, c) == w.at(c, 0));

    Network zero;
    zero.add(std::make_unique<DenseLayer>(Matrix(3, 1, 0.0), Matrix(1, 1, 5.0),
                                          Activation::linear));
    Matrix gz = input_gradient(zero, batch);
    for (double v : gz.values()) CHECK(v == 0.0);

    Network wide = identity_net();
    CHECK_THROWS_AS(input_gradient(wide, Matrix(1, 2, 0.0)), EngineError);
}

TEST_CASE("input gradient matches finite differences") {
    Rng rng(404);
    int done = 0;
    while (done < 10) {
        Network net = random_net(rng, 3, {6, 4}, Activation::linear);
        Matrix batch = random_matrix(2, 3, rng);
        if (testutil::relu_margin(net, batch) < 1e-3) continue;
        Matrix g = input_gradient(net, batch);
        for (std::size_t r = 0; r < batch.rows(); ++r)
            for (std::size_t c = 0; c < batch.cols(); ++c) {
                auto eval = [&]() {
                    const Matrix out = net.forward(batch);
                    double s = 0.0;
                    for (double v : out.values()) s += v;
                    return s;
                };
                const double fd = fd_derivative(eval, &batch.at(r, c));
                CHECK(testutil::fd_matches(g.at(r, c), fd, 1e-4));
            }
        ++done;
    }
}

TEST_CASE("gradient of the input-gradient norm matches finite differences") {
    Rng rng(515);
    int done = 0;
    while (done < 10) {
        Network net = random_net(rng, 3, {5}, Activation::linear);
        Matrix row = random_matrix(1, 3, rng);
        if (testutil::relu_margin(net, row) < 1e-3) continue;

        auto params = net.parameters();
        Tensor probe = Tensor::leaf(row);
        Tensor out = net.forward_t(probe);
        Tensor g = gradients(out, {probe})[0];
        Tensor norm = fedbal::sqrt(sum_all(mul(g, g)));
        auto dnorm = gradients(norm, params);

        auto norm_value = [&]() {
            Matrix gm = input_gradient(net, row);
            double s = 0.0;
            for (double v : gm.values()) s += v * v;
            return std::sqrt(s);
        };

        bool usable = true;
        for (std::size_t pi = 0; pi < params.size() && usable; ++pi) {
            Matrix& m = params[pi].mutable_value();
            for (std::size_t i = 0; i < m.size(); ++i) {
                const double fd = fd_derivative(norm_value, &m.values()[i]);
                const double got = dnorm[pi].value().values()[i];
                if (!testutil::fd_matches(got, fd, 1e-3)) {
                    CHECK(testutil::fd_matches(got, fd, 1e-3));
                    usable = false;
                    break;
                }
            }
        }
        ++done;
    }
}

TEST_CASE("batchnorm training statistics") {
    Rng rng(88);
    BatchNormLayer bn(4);
    Matrix batch = random_matrix(32, 4, rng, -5.0, 5.0);
    Tensor out = bn.forward(Tensor::constant(batch), true, nullptr);
    for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < 32; ++r) mean += out.value().at(r, c);
        mean /= 32.0;
        double var = 0.0;
        for (std::size_t r = 0; r < 32; ++r) {
            const double d = out.value().at(r, c) - mean;
            var += d * d;
        }
        var /= 32.0;
        CHECK(std::fabs(mean) < 1e-6);
        CHECK(std::fabs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("batchnorm running statistics follow the update rule") {
    BatchNormLayer bn(1, 0.9, 1e-7);
    Matrix batch = Matrix::column({1.0, 3.0});
    bn.forward(Tensor::constant(batch), true, nullptr);
    // batch mean 2, biased variance 1; running starts at (0, 1).
    CHECK(bn.running_mean().at(0, 0) == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
    CHECK(bn.running_var().at(0, 0) == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("batchnorm eval mode uses running statistics") {
    BatchNormLayer bn(2);
    Matrix warm = Matrix::from_rows({{2, -4}, {6, 4}, {4, 0}, {0, 0}});
    for (int i = 0; i < 200; ++i) bn.forward(Tensor::constant(warm), true, nullptr);
    Matrix probe = Matrix::from_rows({{3, 0}});
    Matrix out = bn.forward(Tensor::constant(probe), false, nullptr).value();
    const double want0 =
        (3.0 - bn.running_mean().at(0, 0)) / std::sqrt(bn.running_var().at(0, 0) + 1e-7);
    CHECK(out.at(0, 0) == doctest::Approx(want0).epsilon(1e-12));
    // Eval forward must not move the running statistics.
    const double frozen = bn.running_mean().at(0, 0);
    bn.forward(Tensor::constant(probe), false, nullptr);
    CHECK(bn.running_mean().at(0, 0) == frozen);
}

TEST_CASE("gaussian noise layer modes") {
    GaussianNoiseLayer noise(0.25);
    Matrix x = Matrix::from_rows({{1, 2, 3}});
    Tensor in = Tensor::constant(x);

    // Eval mode: exact identity, same node.
    Tensor out_eval = noise.forward(in, false, nullptr);
    CHECK(out_eval.node() == in.node());

    // Zero stddev consumes nothing from the stream.
    GaussianNoiseLayer silent(0.0);
    Rng rng(42);
    Tensor out_silent = silent.forward(in, true, &rng);
    CHECK(out_silent.node() == in.node());
    Rng untouched(42);
    CHECK(rng.next_u64() == untouched.next_u64());

    // Training mode adds zero-mean noise at the configured scale.
    Rng noisy(7);
    const int n = 100000;
    Matrix big(n, 1, 0.0);
    Tensor big_t = Tensor::constant(big);
    Tensor out = noise.forward(big_t, true, &noisy);
    double sum = 0.0, sumsq = 0.0;
    for (double v : out.value().values()) {
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sumsq / n - mean * mean);
    CHECK(std::fabs(mean) < 5.0 * 0.25 / std::sqrt(static_cast<double>(n)));
    CHECK(std::fabs(sd - 0.25) / 0.25 < 0.05);

    CHECK_THROWS_AS(noise.forward(in, true, nullptr), EngineError);
    CHECK_THROWS_AS(GaussianNoiseLayer(-0.1), EngineError);
}

TEST_CASE("classifier factory shape and parameter count") {
    Rng rng(1234);
    ClassifierSpec spec;
    Network net = make_classifier(spec, rng);
    CHECK(net.input_dim() == 13);
    CHECK(net.output_dim() == 1);
    CHECK(net.parameter_count() == 46849);

    // The noise layer adds no parameters.
    ClassifierSpec central = spec;
    central.noise_layer = false;
    Rng rng2(1234);
    Network cnet = make_classifier(central, rng2);
    CHECK(cnet.parameter_count() == 46849);
    CHECK(cnet.layer_count() == net.layer_count() - 1);

    // Identical draws with and without the noise layer present.
    CHECK(static_cast<DenseLayer&>(net.layer(0)).weights().values() ==
          static_cast<DenseLayer&>(cnet.layer(0)).weights().values());

    Matrix probe = random_matrix(4, 13, rng);
    Matrix out = net.forward(probe);
    CHECK(out.rows() == 4);
    CHECK(out.cols() == 1);
    for (double v : out.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("generator and discriminator factories") {
    Rng rng(55);
    Network gen = make_generator(13, 13, {512, 256, 128}, rng);
    CHECK(gen.input_dim() == 13);
    CHECK(gen.output_dim() == 13);
    Matrix z = random_matrix(3, 13, rng, -2, 2);
    Matrix fake = gen.forward(z);
    for (double v : fake.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    Network disc = make_discriminator(13, {128, 64}, true, true, rng);
    CHECK(disc.output_dim() == 1);
    bool has_bn = false;
    for (std::size_t i = 0; i < disc.layer_count(); ++i)
        has_bn = has_bn || disc.layer(i).kind() == LayerKind::batchnorm;
    CHECK(has_bn);

    Network critic = make_discriminator(13, {128, 64}, true, false, rng);
    const auto& last = static_cast<const DenseLayer&>(critic.layer(critic.layer_count() - 1));
    CHECK(last.activation() == Activation::linear);
}

TEST_CASE("clip_weights clamps every trainable parameter") {
    Rng rng(3);
    Network net = random_net(rng, 4, {8}, Activation::sigmoid, true);
    // Push a batchnorm gamma out of range too.
    for (std::size_t i = 0; i < net.layer_count(); ++i)
        if (net.layer(i).kind() == LayerKind::batchnorm)
            net.layer(i).params()[0].mutable_value().at(0, 0) = 2.0;
    clip_weights(net, 0.01);
    for (auto& p : net.parameters())
        for (double v : p.value().values()) {
            CHECK(v <= 0.01);
            CHECK(v >= -0.01);
        }
    CHECK_THROWS_AS(clip_weights(net, 0.0), EngineError);

    Network tiny;
    tiny.add(std::make_unique<DenseLayer>(Matrix(1, 1, 0.003), Matrix(1, 1, 0.0),
                                          Activation::linear));
    clip_weights(tiny, 0.01);
    CHECK(static_cast<DenseLayer&>(tiny.layer(0)).weights().at(0, 0) == 0.003);
}

TEST_CASE("training determinism") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Network net = random_net(rng, 3, {6}, Activation::sigmoid);
        net.set_training(true);
        Rng data_rng(seed + 1);
        Matrix batch = random_matrix(8, 3, data_rng);
        Matrix targets(8, 1);
        for (double& t : targets.values()) t = data_rng.uniform() < 0.5 ? 0.0 : 1.0;
        Optimizer opt = Optimizer::sgd_momentum(0.05, 0.9);
        auto params = net.parameters();
        for (int step = 0; step < 20; ++step) {
            Tensor out = net.forward_t(Tensor::constant(batch));
            Tensor loss = bce_loss_t(out, targets);
            auto grads = gradients(loss, params);
            std::vector<Matrix> gv;
            for (auto& g : grads) gv.push_back(g.value());
            opt.step(params, gv);
        }
        std::vector<double> flat;
        for (auto& p : params)
            flat.insert(flat.end(), p.value().values().begin(), p.value().values().end());
        return flat;
    };
    CHECK(run(2718) == run(2718));
}
