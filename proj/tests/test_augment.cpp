#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "fedbal/augment.hpp"
#include "fedbal/error.hpp"
#include "fedbal/layers.hpp"
#include "fedbal/losses.hpp"
#include "fedbal/metrics.hpp"
#include "fedbal/models.hpp"
#include "fedbal/weights.hpp"
#include "testutil.hpp"

using namespace fedbal;
using namespace testutil;

namespace {

LabeledDataset blob_dataset(std::size_t n_min, std::size_t n_maj, std::size_t dim, Rng& rng,
                            int minority_label = 1) {
    LabeledDataset d;
    d.features = Matrix(n_min + n_maj, dim);
    for (double& v : d.features.values())
        v = rng.uniform();
    for (std::size_t i = 0; i < n_min + n_maj; ++i) {
        const int label = i < n_min ? minority_label : 1 - minority_label;
        d.labels.push_back(label);
        d.provenance.push_back(Provenance::real);
    }
    return d;
}

// tiny architectures keep the adversarial tests fast
GanConfig small_gan_config() {
    GanConfig cfg;
    cfg.latent_dim = 4;
    cfg.batch_size = 16;
    cfg.epochs = 2;
    cfg.generator_hidden = {8};
    cfg.discriminator_hidden = {6};
    return cfg;
}

Network linear_critic(const std::vector<double>& weight_col) {
    Matrix w(weight_col.size(), 1);
    for (std::size_t i = 0; i < weight_col.size(); ++i)
        w.at(i, 0) = weight_col[i];
    Network net;
    net.add(std::make_unique<DenseLayer>(std::move(w), Matrix(1, 1, 0.3),
                                         Activation::linear));
    return net;
}

std::vector<double> flat(const Matrix& m) {
    return m.values();
}

} // namespace

TEST_CASE("smote stays on the segment between two points") {
    LabeledDataset d;
    d.features = Matrix::from_rows({{0.0, 0.0}, {1.0, 1.0}, {0.2, 0.9}, {0.9, 0.1},
                                    {0.4, 0.6}});
    d.labels = {1, 1, 0, 0, 0};
    d.provenance.assign(5, Provenance::real);

    Rng rng(11);
    SmoteConfig cfg;
    cfg.k_neighbors = 1;
    cfg.target = 25;
    const Matrix rows = smote(d, cfg, rng);
    REQUIRE(rows.rows() == 25);
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        const double x = rows.at(r, 0);
        const double y = rows.at(r, 1);
        CHECK(std::abs(x - y) < 1e-12);
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("smote balanced target fills the class gap") {
    Rng rng(21);
    const LabeledDataset d = blob_dataset(4, 10, 3, rng);
    SmoteConfig cfg;
    cfg.k_neighbors = 2;
    const Matrix rows = smote(d, cfg, rng);
    CHECK(rows.rows() == 6);
    CHECK(rows.cols() == 3);
}

TEST_CASE("smote rows interpolate k-nearest minority pairs") {
    Rng rng(303);
    LabeledDataset d = blob_dataset(30, 45, 4, rng);
    SmoteConfig cfg;
    cfg.k_neighbors = 5;
    cfg.target = 60;
    const Matrix rows = smote(d, cfg, rng);
    REQUIRE(rows.rows() == 60);

    const Matrix minority = d.rows_with_label(1);
    const std::size_t n = minority.rows();
    auto dist2 = [&](std::size_t a, std::size_t b) {
        double acc = 0.0;
        for (std::size_t c = 0; c < minority.cols(); ++c) {
            const double diff = minority.at(a, c) - minority.at(b, c);
            acc += diff * diff;
        }
        return acc;
    };
    // brute-force neighbor rank: how many other points sit strictly closer
    auto rank_of = [&](std::size_t base, std::size_t other) {
        std::size_t closer = 0;
        const double ref = dist2(base, other);
        for (std::size_t j = 0; j < n; ++j)
            if (j != base && j != other && dist2(base, j) < ref)
                ++closer;
        return closer;
    };

    for (std::size_t r = 0; r < rows.rows(); ++r) {
        bool explained = false;
        for (std::size_t i = 0; i < n && !explained; ++i) {
            for (std::size_t j = 0; j < n && !explained; ++j) {
                if (j == i)
                    continue;
                // solve s = x_i + u (x_j - x_i) on the first coordinate with
                // a nonzero span, then verify every coordinate
                double u = -1.0;
                bool ok = true;
                for (std::size_t c = 0; c < minority.cols(); ++c) {
                    const double span = minority.at(j, c) - minority.at(i, c);
                    const double offset = rows.at(r, c) - minority.at(i, c);
                    if (std::abs(span) > 1e-9) {
                        const double cand = offset / span;
                        if (u < 0.0)
                            u = cand;
                        else if (std::abs(cand - u) > 1e-6)
                            ok = false;
                    } else if (std::abs(offset) > 1e-9) {
                        ok = false;
                    }
                }
                if (!ok || u < -1e-9 || u > 1.0 + 1e-9)
                    continue;
                if (rank_of(i, j) < 5)
                    explained = true;
            }
        }
        CHECK(explained);
    }
}

TEST_CASE("smote input validation") {
    Rng rng(5);
    const LabeledDataset d = blob_dataset(4, 10, 2, rng);

    SmoteConfig cfg;
    cfg.k_neighbors = 4;  // needs at least 5 minority rows
    CHECK_THROWS_AS(smote(d, cfg, rng), DataError);

    cfg.k_neighbors = 0;
    CHECK_THROWS_AS(smote(d, cfg, rng), ConfigError);

    cfg.k_neighbors = 2;
    cfg.target = -3;
    CHECK_THROWS_AS(smote(d, cfg, rng), ConfigError);

    cfg.target = 0;
    CHECK(smote(d, cfg, rng).rows() == 0);
}

TEST_CASE("adversarial loss values") {
    CHECK(generator_loss(Matrix(1, 1, 1.0)) == 0.0);
    CHECK(generator_loss(Matrix(1, 1, 0.5)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(generator_loss(Matrix(1, 1, std::exp(-1.0))) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK(discriminator_loss(Matrix(1, 1, 1.0), Matrix(1, 1, 0.0)) == 0.0);
    CHECK(discriminator_loss(Matrix(1, 1, 0.5), Matrix(1, 1, 0.5))
          == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(discriminator_loss(Matrix(1, 1, 0.8), Matrix(1, 1, 0.3))
          == doctest::Approx(-std::log(0.8) - std::log(0.7)).epsilon(1e-12));

    CHECK(minimax_value(Matrix(2, 1, 0.5), Matrix(2, 1, 0.5))
          == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));
    const double eps = 1e-9;
    CHECK(minimax_value(Matrix(1, 1, 1.0 - eps), Matrix(1, 1, eps))
          == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(minimax_value(Matrix(1, 1, 1.0 - eps), Matrix(1, 1, eps)) < 0.0);
}

TEST_CASE("loss identities hold batch-wise") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(8);
        Matrix real(n, 1);
        Matrix fake(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            real.at(i, 0) = rng.uniform();
            fake.at(i, 0) = rng.uniform();
        }
        CHECK(minimax_value(real, fake) == -discriminator_loss(real, fake));

        // element identity: the generator term cancels ln D(G(z)) exactly
        for (std::size_t i = 0; i < n; ++i) {
            const Matrix one(1, 1, fake.at(i, 0));
            CHECK(generator_loss(one) + std::log(std::max(fake.at(i, 0), kProbEps)) == 0.0);
        }
    }
}

TEST_CASE("critic loss arithmetic") {
    CHECK(critic_loss_gp(Matrix(1, 1, 0.7), Matrix(1, 1, 0.2), 0.04, 10.0)
          == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(critic_loss_gp(Matrix(1, 1, 0.9), Matrix(1, 1, 0.4), 0.0, 10.0)
          == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK_THROWS_AS(critic_loss_gp(Matrix(), Matrix(1, 1, 0.4), 0.0, 10.0), EngineError);
    CHECK_THROWS_AS(critic_loss_gp(Matrix(1, 1, 0.4), Matrix(1, 1, 0.1), -1.0, 10.0),
                    EngineError);
    GanConfig defaults;
    CHECK(defaults.lambda_gp == 10.0);
}

TEST_CASE("gradient penalty is exact for linear critics") {
    Rng rng(88);
    Matrix real(6, 2);
    Matrix fake(6, 2);
    for (double& v : real.values())
        v = rng.uniform();
    for (double& v : fake.values())
        v = rng.uniform();

    Network unit = linear_critic({1.0, 0.0});
    CHECK(gradient_penalty(unit, real, fake, rng) == 0.0);

    Network triple = linear_critic({3.0, 0.0});
    CHECK(gradient_penalty(triple, real, fake, rng) == 4.0);

    Network diag = linear_critic({1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)});
    CHECK(gradient_penalty(diag, real, fake, rng) < 1e-20);

    Matrix shaped(6, 3);
    CHECK_THROWS_AS(gradient_penalty(unit, shaped, fake, rng), EngineError);
    Rng r2(1);
    Network wide;
    wide.add(std::make_unique<DenseLayer>(2, 2, Activation::linear, r2));
    CHECK_THROWS_AS(gradient_penalty(wide, real, fake, rng), EngineError);
}

TEST_CASE("gradient penalty matches a finite-difference oracle") {
    Rng init(7119);
    for (int trial = 0; trial < 8; ++trial) {
        Network critic = make_discriminator(3, {8, 4}, false, false, init);
        Matrix real = random_matrix(5, 3, init, 0.0, 1.0);
        Matrix fake = random_matrix(5, 3, init, 0.0, 1.0);

        const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(trial);
        Rng draw(seed);
        const double got = gradient_penalty(critic, real, fake, draw);

        // reproduce the interpolates with the same draw stream
        Rng draw2(seed);
        Matrix mixed(5, 3);
        for (std::size_t r = 0; r < 5; ++r) {
            const double e = draw2.uniform();
            for (std::size_t c = 0; c < 3; ++c)
                mixed.at(r, c) = e * real.at(r, c) + (1.0 - e) * fake.at(r, c);
        }
        if (relu_margin(critic, mixed) < 1e-3)
            continue;  // kink too close for finite differences

        auto critic_sum = [&](const Matrix& batch) {
            double acc = 0.0;
            const Matrix out = critic.forward(batch);
            for (double v : out.values())
                acc += v;
            return acc;
        };
        const double h = 1e-5;
        double penalty_fd = 0.0;
        for (std::size_t r = 0; r < 5; ++r) {
            double norm_sq = 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
                Matrix plus = mixed;
                plus.at(r, c) += h;
                Matrix minus = mixed;
                minus.at(r, c) -= h;
                const double g = (critic_sum(plus) - critic_sum(minus)) / (2.0 * h);
                norm_sq += g * g;
            }
            const double gap = std::sqrt(norm_sq) - 1.0;
            penalty_fd += gap * gap;
        }
        penalty_fd /= 5.0;
        CHECK(fd_matches(got, penalty_fd, 1e-3));
    }
}

TEST_CASE("gradient penalty derivative w.r.t. critic parameters") {
    Rng init(9021);
    Network critic = make_discriminator(2, {4}, false, false, init);
    const Matrix real = random_matrix(3, 2, init, 0.0, 1.0);
    const Matrix fake = random_matrix(3, 2, init, 0.0, 1.0);
    const std::uint64_t seed = 424242;

    Rng draw(seed);
    const Tensor gp_t = gradient_penalty_t(critic, real, fake, draw);
    std::vector<Tensor> params = critic.parameters();
    const std::vector<Tensor> grads = gradients(gp_t, params);

    for (std::size_t p = 0; p < params.size(); ++p) {
        Matrix& value = params[p].mutable_value();
        for (std::size_t k = 0; k < std::min<std::size_t>(value.size(), 4); ++k) {
            double* slot = value.data() + k;
            const double fd = fd_derivative(
                [&] {
                    Rng replay(seed);
                    return gradient_penalty(critic, real, fake, replay);
                },
                slot);
            CHECK(fd_matches(grads[p].value().values()[k], fd, 1e-3));
        }
    }
}

TEST_CASE("gradient penalty is non-negative for arbitrary critics") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        Network critic = make_discriminator(3, {6, 4}, trial % 2 == 0, false, rng);
        critic.set_training(trial % 3 == 0);
        const Matrix real = random_matrix(4, 3, rng, 0.0, 1.0);
        const Matrix fake = random_matrix(4, 3, rng, 0.0, 1.0);
        const double gp = gradient_penalty(critic, real, fake, rng);
        CHECK(gp >= 0.0);
        CHECK(std::isfinite(gp));
    }
}

TEST_CASE("gan training is deterministic under a fixed seed") {
    Rng data_rng(640);
    const Matrix rows = random_matrix(24, 3, data_rng, 0.0, 1.0);
    GanConfig cfg = small_gan_config();
    cfg.epochs = 3;

    Rng a(2025);
    TrainedGenerator ga = train_gan(rows, cfg, a);
    Rng b(2025);
    TrainedGenerator gb = train_gan(rows, cfg, b);

    CHECK(serialize_weights(ga.network).payload == serialize_weights(gb.network).payload);
    REQUIRE(ga.history.size() == 3);
    REQUIRE(gb.history.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(ga.history[e].g_loss == gb.history[e].g_loss);
        CHECK(ga.history[e].d_loss == gb.history[e].d_loss);
        CHECK(ga.history[e].minimax == gb.history[e].minimax);
        CHECK(ga.history[e].minimax == -ga.history[e].d_loss);
        CHECK(ga.history[e].epoch == e + 1);
    }

    Rng s1(9);
    Rng s2(9);
    CHECK(flat(ga.sample(10, s1)) == flat(ga.sample(10, s2)));
}

TEST_CASE("discriminator weights stay clipped and steps alternate") {
    Rng data_rng(77);
    const Matrix rows = random_matrix(64, 3, data_rng, 0.0, 1.0);

    GanConfig cfg = small_gan_config();
    cfg.batch_size = 64;
    cfg.epochs = 1;

    std::vector<GanStepEvent::Kind> schedule;
    bool clipped = true;
    cfg.observer = [&](const GanStepEvent& ev) {
        schedule.push_back(ev.kind);
        if (ev.kind == GanStepEvent::Kind::discriminator) {
            Network& d = const_cast<Network&>(ev.discriminator);
            for (Tensor& p : d.parameters())
                for (double v : p.value().values())
                    if (std::abs(v) > cfg.clip_value)
                        clipped = false;
        }
    };
    Rng rng(5150);
    (void)train_gan(rows, cfg, rng);

    REQUIRE(schedule.size() == 2);  // 64 rows, batch 64, one epoch
    CHECK(schedule[0] == GanStepEvent::Kind::discriminator);
    CHECK(schedule[1] == GanStepEvent::Kind::generator);
    CHECK(clipped);
}

TEST_CASE("small datasets fall back to one full batch") {
    Rng data_rng(31);
    const Matrix rows = random_matrix(10, 2, data_rng, 0.0, 1.0);
    GanConfig cfg = small_gan_config();
    cfg.batch_size = 64;
    cfg.epochs = 2;
    std::size_t d_steps = 0;
    cfg.observer = [&](const GanStepEvent& ev) {
        if (ev.kind == GanStepEvent::Kind::discriminator)
            ++d_steps;
    };
    Rng rng(1);
    (void)train_gan(rows, cfg, rng);
    CHECK(d_steps == 2);  // one per epoch
}

TEST_CASE("gan training rejects bad inputs") {
    Rng rng(3);
    GanConfig cfg = small_gan_config();
    Matrix out_of_range(8, 2, 1.5);
    CHECK_THROWS_AS(train_gan(out_of_range, cfg, rng), DataError);

    cfg.latent_dim = 0;
    CHECK_THROWS_AS(train_gan(Matrix(8, 2, 0.5), cfg, rng), ConfigError);
    cfg = small_gan_config();
    cfg.critic_iterations = 0;
    CHECK_THROWS_AS(train_wgan_gp(Matrix(8, 2, 0.5), cfg, rng), ConfigError);
    cfg = small_gan_config();
    cfg.clip_value = 0.0;
    CHECK_THROWS_AS(train_gan(Matrix(8, 2, 0.5), cfg, rng), ConfigError);
}

TEST_CASE("trained gan moves toward off-center 1-D data") {
    // data sits at 0.8 so an untrained sigmoid generator (mass near 0.5)
    // cannot pass by accident; the seed is pinned because training is
    // bit-deterministic and this variant is seed-sensitive by nature
    Rng data_rng(4096);
    Matrix rows(256, 1);
    for (double& v : rows.values())
        v = std::clamp(data_rng.gaussian(0.8, 0.06), 0.0, 1.0);

    GanConfig cfg;
    cfg.latent_dim = 4;
    cfg.batch_size = 64;
    cfg.epochs = 100;
    cfg.learning_rate = 1e-4;
    cfg.generator_hidden = {16, 8};
    cfg.discriminator_hidden = {16, 8};
    cfg.clip_value = 1.0;  // loose bound so the discriminator can learn

    Rng rng(2);
    TrainedGenerator gen = train_gan(rows, cfg, rng);
    const Matrix samples = gen.sample(1000, rng);

    Rng fresh(2);
    TrainedGenerator init{make_generator(cfg.latent_dim, 1, cfg.generator_hidden, fresh),
                          GanVariant::gan, cfg.latent_dim, 1, {}, {}, {}};
    const Matrix init_samples = init.sample(1000, fresh);

    std::vector<double> real_vec = flat(rows);
    std::vector<double> gen_vec = flat(samples);
    std::vector<double> uniform_vec(1000);
    for (double& v : uniform_vec)
        v = rng.uniform();

    const double w_gen = empirical_wasserstein_1d(real_vec, gen_vec);
    const double w_init = empirical_wasserstein_1d(real_vec, flat(init_samples));
    const double w_uniform = empirical_wasserstein_1d(real_vec, uniform_vec);
    CHECK(w_gen < 0.5 * w_uniform);
    CHECK(w_gen < 0.5 * w_init);

    double mean = 0.0;
    for (double v : gen_vec) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        mean += v;
    }
    mean /= static_cast<double>(gen_vec.size());
    CHECK(mean > 0.65);
    CHECK(mean < 0.95);
}

TEST_CASE("conditional gan wires the label column and learns separation") {
    // two tight 1-D classes: labels 0 near 0.2, labels 1 near 0.8
    Rng data_rng(515151);
    LabeledDataset d;
    d.features = Matrix(128, 1);
    for (std::size_t i = 0; i < 128; ++i) {
        const int label = i < 64 ? 0 : 1;
        const double center = label == 0 ? 0.2 : 0.8;
        d.features.at(i, 0) = std::clamp(data_rng.gaussian(center, 0.05), 0.0, 1.0);
        d.labels.push_back(label);
        d.provenance.push_back(Provenance::real);
    }

    GanConfig cfg;
    cfg.latent_dim = 4;
    cfg.batch_size = 32;
    cfg.epochs = 80;
    cfg.generator_hidden = {16, 8};
    cfg.discriminator_hidden = {16, 8};
    cfg.clip_value = 1.0;

    Rng rng(161803);
    TrainedGenerator gen = train_cgan(d, cfg, rng);
    CHECK(gen.variant == GanVariant::cgan);
    CHECK(gen.network.input_dim() == cfg.latent_dim + 1);
    CHECK(gen.feature_dim == 1);

    const Matrix ones = gen.sample_conditioned(200, 1, rng);
    REQUIRE(ones.rows() == 200);
    double mean = 0.0;
    for (double v : ones.values())
        mean += v;
    mean /= 200.0;
    CHECK(std::abs(mean - 0.8) < std::abs(mean - 0.2));

    Rng r2(88);
    CHECK_THROWS_AS(
        train_cgan(blob_dataset(0, 12, 2, r2), cfg, r2), DataError);
}

TEST_CASE("unconditional generators refuse label conditioning") {
    Rng rng(404);
    GanConfig cfg = small_gan_config();
    TrainedGenerator gen = train_gan(random_matrix(20, 2, rng, 0.0, 1.0), cfg, rng);
    CHECK_THROWS_AS(gen.sample_conditioned(3, 1, rng), EngineError);
}

TEST_CASE("wgan-gp runs five critic steps per generator step") {
    Rng data_rng(99);
    const Matrix rows = random_matrix(32, 2, data_rng, 0.0, 1.0);

    GanConfig cfg = small_gan_config();
    cfg.batch_size = 16;
    cfg.epochs = 1;

    std::vector<GanStepEvent::Kind> schedule;
    cfg.observer = [&](const GanStepEvent& ev) { schedule.push_back(ev.kind); };
    Rng rng(11);
    TrainedGenerator gen = train_wgan_gp(rows, cfg, rng);
    CHECK(gen.variant == GanVariant::wgan_gp);

    REQUIRE(schedule.size() == 12);  // 2 batches x (5 critic + 1 generator)
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t i = 0; i < 5; ++i)
            CHECK(schedule[b * 6 + i] == GanStepEvent::Kind::discriminator);
        CHECK(schedule[b * 6 + 5] == GanStepEvent::Kind::generator);
    }

    GanConfig defaults;
    CHECK(defaults.wgan_learning_rate == 0.0001);
    CHECK(defaults.clip_value == 0.01);
    CHECK(defaults.critic_iterations == 5);
}

TEST_CASE("wgan-gp beats the uniform baseline on 1-D data") {
    Rng data_rng(8080);
    Matrix rows(192, 1);
    for (double& v : rows.values())
        v = std::clamp(data_rng.gaussian(0.5, 0.1), 0.0, 1.0);

    GanConfig cfg;
    cfg.latent_dim = 4;
    cfg.batch_size = 64;
    cfg.epochs = 40;
    cfg.generator_hidden = {16, 8};
    cfg.discriminator_hidden = {16, 8};
    cfg.clip_critic = false;

    Rng rng(31415);
    TrainedGenerator gen = train_wgan_gp(rows, cfg, rng);
    const Matrix samples = gen.sample(1000, rng);

    std::vector<double> uniform_vec(1000);
    for (double& v : uniform_vec)
        v = rng.uniform();
    const double w_gen = empirical_wasserstein_1d(flat(rows), flat(samples));
    const double w_uniform = empirical_wasserstein_1d(flat(rows), uniform_vec);
    CHECK(w_gen < w_uniform);
}

TEST_CASE("runaway training aborts with a divergence error") {
    Rng data_rng(55);
    const Matrix rows = random_matrix(16, 2, data_rng, 0.0, 1.0);
    GanConfig cfg = small_gan_config();
    cfg.epochs = 3;
    cfg.wgan_learning_rate = 1e5;
    cfg.clip_critic = false;
    Rng rng(1);
    CHECK_THROWS_AS(train_wgan_gp(rows, cfg, rng), DivergenceError);
}

TEST_CASE("balance equalizes class counts for every method") {
    const BalanceMethod methods[] = {BalanceMethod::smote, BalanceMethod::gan_minority,
                                     BalanceMethod::cgan, BalanceMethod::smote_gan,
                                     BalanceMethod::wgan_gp};
    Rng rng(70707);
    for (BalanceMethod method : methods) {
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t n_min = 7 + rng.uniform_index(6);
            const std::size_t n_maj = n_min + 1 + rng.uniform_index(12);
            const int minority_label = trial % 3 == 0 ? 0 : 1;
            const LabeledDataset d =
                blob_dataset(n_min, n_maj, 3, rng, minority_label);

            BalanceConfig cfg;
            cfg.gan = small_gan_config();
            cfg.gan.epochs = 1;
            cfg.smote.k_neighbors = 5;

            Rng run_rng(1000 + trial);
            const LabeledDataset out = balance(d, method, cfg, run_rng);

            CHECK(out.count_label(0) == out.count_label(1));
            CHECK(out.size() == 2 * n_maj);
            CHECK(out.count_label(minority_label) == n_maj);

            // the original block is untouched, synthetic rows follow it
            REQUIRE(out.size() >= d.size());
            CHECK(std::memcmp(out.features.data(), d.features.data(),
                              d.features.size() * sizeof(double))
                  == 0);
            for (std::size_t i = 0; i < d.size(); ++i) {
                CHECK(out.labels[i] == d.labels[i]);
                CHECK(out.provenance[i] == Provenance::real);
            }
            for (std::size_t i = d.size(); i < out.size(); ++i) {
                CHECK(out.labels[i] == minority_label);
                CHECK(out.provenance[i] == Provenance::synthetic);
                for (std::size_t c = 0; c < out.dim(); ++c) {
                    CHECK(out.features.at(i, c) >= 0.0);
                    CHECK(out.features.at(i, c) <= 1.0);
                }
            }
        }
    }
}

TEST_CASE("balance is a no-op on already balanced data") {
    Rng rng(121);
    const LabeledDataset d = blob_dataset(8, 8, 2, rng);
    BalanceConfig cfg;
    cfg.gan = small_gan_config();
    const LabeledDataset out = balance(d, BalanceMethod::gan_minority, cfg, rng);
    CHECK(out.size() == d.size());
    CHECK(flat(out.features) == flat(d.features));
    CHECK(out.labels == d.labels);
}

TEST_CASE("balance replays bit-exactly under a fixed seed") {
    Rng data_rng(31337);
    const LabeledDataset d = blob_dataset(9, 21, 3, data_rng);
    BalanceConfig cfg;
    cfg.gan = small_gan_config();

    Rng a(4);
    const LabeledDataset out_a = balance(d, BalanceMethod::gan_minority, cfg, a);
    Rng b(4);
    const LabeledDataset out_b = balance(d, BalanceMethod::gan_minority, cfg, b);
    CHECK(flat(out_a.features) == flat(out_b.features));
    CHECK(out_a.labels == out_b.labels);
}

TEST_CASE("balance on the station-scale class gap") {
    Rng rng(2016);
    const LabeledDataset d = blob_dataset(2016, 7307, 3, rng);
    BalanceConfig cfg;
    Rng run_rng(1);
    const LabeledDataset out = balance(d, BalanceMethod::smote, cfg, run_rng);
    CHECK(out.size() - d.size() == 5291);
    CHECK(out.count_label(0) == 7307);
    CHECK(out.count_label(1) == 7307);
}

TEST_CASE("balance rejects an empty minority class") {
    Rng rng(8);
    LabeledDataset d = blob_dataset(0, 10, 2, rng);
    BalanceConfig cfg;
    CHECK_THROWS_AS(balance(d, BalanceMethod::smote, cfg, rng), DataError);
}

TEST_CASE("smote_gan keeps interpolated rows only when asked") {
    Rng data_rng(660);
    const LabeledDataset d = blob_dataset(8, 17, 2, data_rng);  // gap of 9

    BalanceConfig cfg;
    cfg.gan = small_gan_config();
    cfg.keep_smote_rows = true;
    Rng rng(12);
    const LabeledDataset out = balance(d, BalanceMethod::smote_gan, cfg, rng);
    CHECK(out.count_label(0) == out.count_label(1));
    CHECK(out.size() == 2 * 17);
    std::size_t synthetic = 0;
    for (Provenance p : out.provenance)
        if (p == Provenance::synthetic)
            ++synthetic;
    CHECK(synthetic == 9);
}

TEST_CASE("generator round-trips through its file format") {
    Rng data_rng(456);
    const Matrix rows = random_matrix(20, 3, data_rng, 0.0, 1.0);
    GanConfig cfg = small_gan_config();
    Rng rng(2);
    TrainedGenerator gen = train_gan(rows, cfg, rng);
    gen.scale_min = {0.0, 0.1, 0.2};
    gen.scale_max = {1.0, 0.9, 0.8};

    const auto path = std::filesystem::temp_directory_path() / "fedbal_gen_test.bin";
    save_generator(path, gen);
    TrainedGenerator loaded = load_generator(path);

    CHECK(loaded.variant == GanVariant::gan);
    CHECK(loaded.latent_dim == cfg.latent_dim);
    CHECK(loaded.feature_dim == 3);
    CHECK(loaded.scale_min == gen.scale_min);
    CHECK(loaded.scale_max == gen.scale_max);
    CHECK(serialize_weights(loaded.network).payload
          == serialize_weights(gen.network).payload);

    Rng s1(5);
    Rng s2(5);
    CHECK(flat(gen.sample(7, s1)) == flat(loaded.sample(7, s2)));
    std::filesystem::remove(path);
}

TEST_CASE("conditional generator round-trips with its label input") {
    Rng data_rng(6161);
    LabeledDataset d = blob_dataset(10, 14, 2, data_rng);
    GanConfig cfg = small_gan_config();
    Rng rng(3);
    TrainedGenerator gen = train_cgan(d, cfg, rng);

    const auto path = std::filesystem::temp_directory_path() / "fedbal_cgen_test.bin";
    save_generator(path, gen);
    TrainedGenerator loaded = load_generator(path);
    CHECK(loaded.variant == GanVariant::cgan);
    CHECK(loaded.network.input_dim() == cfg.latent_dim + 1);

    Rng s1(5);
    Rng s2(5);
    CHECK(flat(gen.sample_conditioned(4, 1, s1))
          == flat(loaded.sample_conditioned(4, 1, s2)));
    std::filesystem::remove(path);
}

TEST_CASE("generator loader rejects malformed files") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto bad_magic = dir / "fedbal_gen_bad_magic.bin";
    {
        std::ofstream out(bad_magic, std::ios::binary);
        out.write("NOPE----------------", 20);
    }
    CHECK_THROWS_AS(load_generator(bad_magic), EngineError);
    std::filesystem::remove(bad_magic);

    CHECK_THROWS_AS(load_generator(dir / "fedbal_no_such_file.bin"), DataError);

    Rng data_rng(9);
    GanConfig cfg = small_gan_config();
    cfg.epochs = 1;
    Rng rng(7);
    TrainedGenerator gen = train_gan(random_matrix(18, 2, data_rng, 0.0, 1.0), cfg, rng);
    const auto truncated = dir / "fedbal_gen_truncated.bin";
    save_generator(truncated, gen);
    const auto full_size = std::filesystem::file_size(truncated);
    std::filesystem::resize_file(truncated, full_size - 9);
    CHECK_THROWS_AS(load_generator(truncated), EngineError);
    std::filesystem::remove(truncated);
}

TEST_CASE("loss curves serialize as csv") {
    std::vector<EpochLog> history = {{1, 0.5, 1.25, -1.25}, {2, 0.25, 1.0, -1.0}};
    const std::string csv = loss_curve_csv(history);
    CHECK(csv == "epoch,g_loss,d_loss,minimax_value\n"
                 "1,0.5,1.25,-1.25\n"
                 "2,0.25,1,-1\n");
}

TEST_CASE("variant and method names round-trip") {
    for (GanVariant v : {GanVariant::gan, GanVariant::cgan, GanVariant::wgan_gp})
        CHECK(variant_from_name(variant_name(v)) == v);
    for (BalanceMethod m :
         {BalanceMethod::smote, BalanceMethod::gan_minority, BalanceMethod::cgan,
          BalanceMethod::smote_gan, BalanceMethod::wgan_gp})
        CHECK(method_from_name(method_name(m)) == m);
    CHECK_THROWS_AS(variant_from_name("vae"), ConfigError);
    CHECK_THROWS_AS(method_from_name("undersample"), ConfigError);
}
