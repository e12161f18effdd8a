#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "fedbal/augment.hpp"
#include "fedbal/error.hpp"
#include "fedbal/losses.hpp"
#include "fedbal/models.hpp"
#include "fedbal/optim.hpp"
#include "fedbal/weights.hpp"

namespace fedbal {

std::string variant_name(GanVariant v) {
    switch (v) {
    case GanVariant::gan: return "gan";
    case GanVariant::cgan: return "cgan";
    case GanVariant::wgan_gp: return "wgan_gp";
    }
    throw EngineError("variant_name: unknown variant");
}

GanVariant variant_from_name(const std::string& name) {
    if (name == "gan")
        return GanVariant::gan;
    if (name == "cgan")
        return GanVariant::cgan;
    if (name == "wgan_gp")
        return GanVariant::wgan_gp;
    throw ConfigError("unknown generator variant: " + name);
}

std::string method_name(BalanceMethod m) {
    switch (m) {
    case BalanceMethod::smote: return "smote";
    case BalanceMethod::gan_minority: return "gan_minority";
    case BalanceMethod::cgan: return "cgan";
    case BalanceMethod::smote_gan: return "smote_gan";
    case BalanceMethod::wgan_gp: return "wgan_gp";
    }
    throw EngineError("method_name: unknown method");
}

BalanceMethod method_from_name(const std::string& name) {
    if (name == "smote")
        return BalanceMethod::smote;
    if (name == "gan_minority")
        return BalanceMethod::gan_minority;
    if (name == "cgan")
        return BalanceMethod::cgan;
    if (name == "smote_gan")
        return BalanceMethod::smote_gan;
    if (name == "wgan_gp")
        return BalanceMethod::wgan_gp;
    throw ConfigError("unknown balance method: " + name);
}

void validate_gan_config(const GanConfig& cfg) {
    if (cfg.latent_dim == 0)
        throw ConfigError("gan config: latent_dim must be at least 1");
    if (cfg.batch_size == 0)
        throw ConfigError("gan config: batch_size must be at least 1");
    if (cfg.lambda_gp < 0.0)
        throw ConfigError("gan config: lambda_gp must be non-negative");
    if (cfg.critic_iterations == 0)
        throw ConfigError("gan config: critic_iterations must be at least 1");
    if (cfg.learning_rate <= 0.0 || cfg.wgan_learning_rate <= 0.0)
        throw ConfigError("gan config: learning rates must be positive");
    if (cfg.clip_value <= 0.0)
        throw ConfigError("gan config: clip_value must be positive");
}

std::string loss_curve_csv(const std::vector<EpochLog>& history) {
    std::string out = "epoch,g_loss,d_loss,minimax_value\n";
    char buf[128];
    for (const EpochLog& e : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.g_loss,
                      e.d_loss, e.minimax);
        out += buf;
    }
    return out;
}

double generator_loss(const Matrix& d_on_fake) {
    if (d_on_fake.empty())
        throw EngineError("generator_loss: empty batch");
    double acc = 0.0;
    for (double p : d_on_fake.values())
        acc += -std::log(std::max(p, kProbEps));
    return acc / static_cast<double>(d_on_fake.size());
}

double discriminator_loss(const Matrix& d_on_real, const Matrix& d_on_fake) {
    if (d_on_real.empty() || d_on_fake.empty())
        throw EngineError("discriminator_loss: empty batch");
    double real_acc = 0.0;
    for (double p : d_on_real.values())
        real_acc += -std::log(std::max(p, kProbEps));
    double fake_acc = 0.0;
    for (double p : d_on_fake.values())
        fake_acc += -std::log(std::max(1.0 - p, kProbEps));
    return real_acc / static_cast<double>(d_on_real.size())
           + fake_acc / static_cast<double>(d_on_fake.size());
}

double minimax_value(const Matrix& d_on_real, const Matrix& d_on_fake) {
    if (d_on_real.empty() || d_on_fake.empty())
        throw EngineError("minimax_value: empty batch");
    double real_acc = 0.0;
    for (double p : d_on_real.values())
        real_acc += std::log(std::max(p, kProbEps));
    double fake_acc = 0.0;
    for (double p : d_on_fake.values())
        fake_acc += std::log(std::max(1.0 - p, kProbEps));
    return real_acc / static_cast<double>(d_on_real.size())
           + fake_acc / static_cast<double>(d_on_fake.size());
}

double critic_loss_gp(const Matrix& d_real_out, const Matrix& d_fake_out, double gp,
                      double lambda) {
    if (d_real_out.empty() || d_fake_out.empty())
        throw EngineError("critic_loss_gp: empty batch");
    if (gp < 0.0)
        throw EngineError("critic_loss_gp: negative penalty");
    double real_acc = 0.0;
    for (double v : d_real_out.values())
        real_acc += v;
    double fake_acc = 0.0;
    for (double v : d_fake_out.values())
        fake_acc += v;
    return fake_acc / static_cast<double>(d_fake_out.size())
           - real_acc / static_cast<double>(d_real_out.size()) + lambda * gp;
}

Tensor gradient_penalty_t(Network& critic, const Matrix& real_batch,
                          const Matrix& fake_batch, Rng& rng) {
    if (!real_batch.same_shape(fake_batch))
        throw EngineError("gradient_penalty: real/fake batch shapes differ");
    if (real_batch.rows() == 0)
        throw EngineError("gradient_penalty: empty batch");
    if (critic.output_dim() != 1)
        throw EngineError("gradient_penalty: critic must end in a single unit");

    Matrix mixed(real_batch.rows(), real_batch.cols());
    for (std::size_t r = 0; r < mixed.rows(); ++r) {
        const double e = rng.uniform();
        for (std::size_t c = 0; c < mixed.cols(); ++c)
            mixed.at(r, c) = e * real_batch.at(r, c) + (1.0 - e) * fake_batch.at(r, c);
    }

    const Tensor x = Tensor::leaf(mixed);
    const Tensor out = critic.forward_t(x);
    const Tensor grad_x = gradients(sum_all(out), {x})[0];
    // a row whose input gradient vanishes (every relu path dead) would put
    // sqrt's derivative at 0/0; the clamp floor keeps the penalty value for
    // that row at (0-1)^2 while masking its gradient
    const Tensor norm = sqrt(clamp(row_sum(mul(grad_x, grad_x)), 1e-24, 1e300));
    const Tensor gap = scalar_add(norm, -1.0);
    return mean_all(mul(gap, gap));
}

double gradient_penalty(Network& critic, const Matrix& real_batch, const Matrix& fake_batch,
                        Rng& rng) {
    return gradient_penalty_t(critic, real_batch, fake_batch, rng).value().at(0, 0);
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values())
        v = rng.gaussian();
    return m;
}

void require_unit_range(const Matrix& rows, const char* who) {
    for (double v : rows.values())
        if (!(v >= 0.0 && v <= 1.0))
            throw DataError(std::string(who) + ": training rows must lie in [0,1]");
}

Matrix take_rows(const Matrix& src, const std::vector<std::size_t>& order,
                 std::size_t first, std::size_t count) {
    Matrix out(count, src.cols());
    for (std::size_t r = 0; r < count; ++r)
        std::memcpy(out.data() + r * src.cols(), src.data() + order[first + r] * src.cols(),
                    src.cols() * sizeof(double));
    return out;
}

Matrix append_column(const Matrix& rows, const std::vector<double>& col) {
    Matrix out(rows.rows(), rows.cols() + 1);
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        std::memcpy(out.data() + r * out.cols(), rows.data() + r * rows.cols(),
                    rows.cols() * sizeof(double));
        out.at(r, rows.cols()) = col[r];
    }
    return out;
}

void guard_loss(double value, const char* what, std::size_t epoch) {
    if (!std::isfinite(value) || std::abs(value) > 1e6)
        throw DivergenceError(std::string(what) + " diverged at epoch "
                              + std::to_string(epoch) + " (value "
                              + std::to_string(value) + ")");
}

void notify(const GanConfig& cfg, std::size_t epoch, GanStepEvent::Kind kind,
            const Network& dis, const Network& gen) {
    if (cfg.observer)
        cfg.observer(GanStepEvent{epoch, kind, dis, gen});
}

// ln of the probability with only the vanishing side clamped, so exact
// endpoints keep their exact loss values.
Tensor log_prob(const Tensor& p) { return log(clamp(p, kProbEps, 2.0)); }
Tensor log_one_minus(const Tensor& p) {
    return log(clamp(scalar_add(neg(p), 1.0), kProbEps, 2.0));
}

std::vector<Matrix> grad_values(const Tensor& loss, std::vector<Tensor>& params) {
    std::vector<Matrix> out;
    const std::vector<Tensor> grads = gradients(loss, params);
    out.reserve(grads.size());
    for (const Tensor& g : grads)
        out.push_back(g.value());
    return out;
}

// Shared driver for the probability-output variants; `labels` switches on
// the conditional wiring (one label column into both networks).
TrainedGenerator adversarial_train(const Matrix& features, const std::vector<double>* labels,
                                   const GanConfig& cfg, Rng& rng) {
    validate_gan_config(cfg);
    require_unit_range(features, labels ? "train_cgan" : "train_gan");
    if (features.rows() == 0)
        throw DataError("gan training: no rows");

    const std::size_t d = features.cols();
    const std::size_t extra = labels ? 1 : 0;
    Network gen = make_generator(cfg.latent_dim + extra, d, cfg.generator_hidden, rng);
    Network dis = make_discriminator(d + extra, cfg.discriminator_hidden, true, true, rng);
    Optimizer g_opt = Optimizer::adam(cfg.learning_rate);
    Optimizer d_opt = Optimizer::adam(cfg.learning_rate);

    const std::size_t n = features.rows();
    const std::size_t bs = std::min(cfg.batch_size, n);
    const std::size_t batches = std::max<std::size_t>(1, n / cfg.batch_size);

    std::vector<EpochLog> history;
    history.reserve(cfg.epochs);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = rng.permutation(n);
        EpochLog log{epoch, 0.0, 0.0, 0.0};
        for (std::size_t b = 0; b < batches; ++b) {
            const Matrix real = take_rows(features, order, b * bs, bs);
            std::vector<double> batch_labels;
            if (labels) {
                batch_labels.resize(bs);
                for (std::size_t r = 0; r < bs; ++r)
                    batch_labels[r] = (*labels)[order[b * bs + r]];
            }

            // discriminator step: fresh fakes, real rows labeled 1, fakes 0
            Matrix z = gaussian_matrix(bs, cfg.latent_dim, rng);
            if (labels)
                z = append_column(z, batch_labels);
            gen.set_training(false);
            Matrix fake = gen.forward(z);
            if (labels)
                fake = append_column(fake, batch_labels);
            const Matrix real_in = labels ? append_column(real, batch_labels) : real;

            dis.set_training(true);
            const Tensor d_real = dis.forward_t(Tensor::constant(real_in));
            const Tensor d_fake = dis.forward_t(Tensor::constant(fake));
            const Tensor d_loss_t = add(neg(mean_all(log_prob(d_real))),
                                        neg(mean_all(log_one_minus(d_fake))));
            log.d_loss = d_loss_t.value().at(0, 0);
            guard_loss(log.d_loss, "discriminator loss", epoch);
            std::vector<Tensor> d_params = dis.parameters();
            d_opt.step(d_params, grad_values(d_loss_t, d_params));
            clip_weights(dis, cfg.clip_value);
            log.minimax = minimax_value(d_real.value(), d_fake.value());
            notify(cfg, epoch, GanStepEvent::Kind::discriminator, dis, gen);

            // generator step through the frozen discriminator
            dis.set_training(false);
            Matrix z2 = gaussian_matrix(bs, cfg.latent_dim, rng);
            if (labels)
                z2 = append_column(z2, batch_labels);
            gen.set_training(true);
            const Tensor g_out = gen.forward_t(Tensor::constant(z2));
            const Tensor d_in = labels
                ? concat_cols(g_out, Tensor::constant(Matrix::column(batch_labels)))
                : g_out;
            const Tensor d_on_fake = dis.forward_t(d_in);
            const Tensor g_loss_t = neg(mean_all(log_prob(d_on_fake)));
            log.g_loss = g_loss_t.value().at(0, 0);
            guard_loss(log.g_loss, "generator loss", epoch);
            std::vector<Tensor> g_params = gen.parameters();
            g_opt.step(g_params, grad_values(g_loss_t, g_params));
            notify(cfg, epoch, GanStepEvent::Kind::generator, dis, gen);
        }
        history.push_back(log);
    }

    TrainedGenerator out{std::move(gen),
                         labels ? GanVariant::cgan : GanVariant::gan,
                         cfg.latent_dim,
                         d,
                         std::move(history),
                         {},
                         {}};
    return out;
}

} // namespace

TrainedGenerator train_gan(const Matrix& minority_rows, const GanConfig& cfg, Rng& rng) {
    return adversarial_train(minority_rows, nullptr, cfg, rng);
}

TrainedGenerator train_cgan(const LabeledDataset& data, const GanConfig& cfg, Rng& rng) {
    validate(data);
    if (data.count_label(0) == 0 || data.count_label(1) == 0)
        throw DataError("train_cgan: both classes must be present");
    std::vector<double> labels(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        labels[i] = static_cast<double>(data.labels[i]);
    return adversarial_train(data.features, &labels, cfg, rng);
}

TrainedGenerator train_wgan_gp(const Matrix& minority_rows, const GanConfig& cfg, Rng& rng) {
    validate_gan_config(cfg);
    require_unit_range(minority_rows, "train_wgan_gp");
    if (minority_rows.rows() == 0)
        throw DataError("gan training: no rows");

    const std::size_t d = minority_rows.cols();
    Network gen = make_generator(cfg.latent_dim, d, cfg.generator_hidden, rng);
    Network critic = make_discriminator(d, cfg.discriminator_hidden, true, false, rng);
    Optimizer g_opt = Optimizer::rmsprop(cfg.wgan_learning_rate);
    Optimizer c_opt = Optimizer::rmsprop(cfg.wgan_learning_rate);

    const std::size_t n = minority_rows.rows();
    const std::size_t bs = std::min(cfg.batch_size, n);
    const std::size_t batches = std::max<std::size_t>(1, n / cfg.batch_size);

    std::vector<EpochLog> history;
    history.reserve(cfg.epochs);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<std::size_t> order = rng.permutation(n);
        EpochLog log{epoch, 0.0, 0.0, 0.0};
        for (std::size_t b = 0; b < batches; ++b) {
            const Matrix real = take_rows(minority_rows, order, b * bs, bs);

            for (std::size_t it = 0; it < cfg.critic_iterations; ++it) {
                const Matrix z = gaussian_matrix(bs, cfg.latent_dim, rng);
                gen.set_training(false);
                const Matrix fake = gen.forward(z);

                critic.set_training(true);
                const Tensor c_real = critic.forward_t(Tensor::constant(real));
                const Tensor c_fake = critic.forward_t(Tensor::constant(fake));
                const Tensor gp = gradient_penalty_t(critic, real, fake, rng);
                const Tensor c_loss_t = add(sub(mean_all(c_fake), mean_all(c_real)),
                                            scalar_mul(gp, cfg.lambda_gp));
                log.d_loss = c_loss_t.value().at(0, 0);
                guard_loss(log.d_loss, "critic loss", epoch);
                std::vector<Tensor> c_params = critic.parameters();
                c_opt.step(c_params, grad_values(c_loss_t, c_params));
                if (cfg.clip_critic)
                    clip_weights(critic, cfg.clip_value);
                notify(cfg, epoch, GanStepEvent::Kind::discriminator, critic, gen);
            }

            critic.set_training(false);
            const Matrix z = gaussian_matrix(bs, cfg.latent_dim, rng);
            gen.set_training(true);
            const Tensor g_out = gen.forward_t(Tensor::constant(z));
            const Tensor c_out = critic.forward_t(g_out);
            const Tensor g_loss_t = neg(mean_all(c_out));
            log.g_loss = g_loss_t.value().at(0, 0);
            guard_loss(log.g_loss, "generator loss", epoch);
            std::vector<Tensor> g_params = gen.parameters();
            g_opt.step(g_params, grad_values(g_loss_t, g_params));
            notify(cfg, epoch, GanStepEvent::Kind::generator, critic, gen);

            log.minimax = -log.d_loss;
        }
        history.push_back(log);
    }

    return TrainedGenerator{std::move(gen), GanVariant::wgan_gp, cfg.latent_dim, d,
                            std::move(history),
                            {},
                            {}};
}

Matrix TrainedGenerator::sample(std::size_t n, Rng& rng) {
    if (variant == GanVariant::cgan)
        return sample_conditioned(n, 1, rng);
    network.set_training(false);
    return network.forward(gaussian_matrix(n, latent_dim, rng));
}

Matrix TrainedGenerator::sample_conditioned(std::size_t n, int label, Rng& rng) {
    if (variant != GanVariant::cgan)
        throw EngineError("sample_conditioned: generator is not label-conditioned");
    network.set_training(false);
    const Matrix z = gaussian_matrix(n, latent_dim, rng);
    return network.forward(append_column(z, std::vector<double>(n, static_cast<double>(label))));
}

namespace {

constexpr char kGenMagic[4] = {'F', 'G', 'N', '1'};

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof v);
}

void push_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof v);
}

void push_doubles(std::vector<std::uint8_t>& out, const std::vector<double>& vs) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(vs.data());
    out.insert(out.end(), p, p + vs.size() * sizeof(double));
}

struct ByteReader {
    const std::uint8_t* p;
    std::size_t left;

    void take(void* dst, std::size_t n) {
        if (n > left)
            throw EngineError("generator file: truncated");
        std::memcpy(dst, p, n);
        p += n;
        left -= n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        take(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        take(&v, sizeof v);
        return v;
    }
    std::vector<double> doubles(std::size_t n) {
        std::vector<double> v(n);
        take(v.data(), n * sizeof(double));
        return v;
    }
};

} // namespace

void save_generator(const std::filesystem::path& path, const TrainedGenerator& gen) {
    static_assert(std::endian::native == std::endian::little);
    std::vector<std::uint8_t> bytes;
    bytes.insert(bytes.end(), kGenMagic, kGenMagic + 4);
    push_u32(bytes, static_cast<std::uint32_t>(gen.variant));
    push_u32(bytes, static_cast<std::uint32_t>(gen.latent_dim));
    push_u32(bytes, static_cast<std::uint32_t>(gen.feature_dim));

    // hidden widths: every dense layer except the output one
    std::vector<std::uint32_t> hidden;
    for (std::size_t i = 0; i + 1 < gen.network.layer_count(); ++i)
        hidden.push_back(static_cast<std::uint32_t>(gen.network.layer(i).output_dim()));
    push_u32(bytes, static_cast<std::uint32_t>(hidden.size()));
    for (std::uint32_t w : hidden)
        push_u32(bytes, w);

    if (gen.scale_min.size() != gen.scale_max.size())
        throw EngineError("save_generator: scaling vectors differ in length");
    push_u32(bytes, static_cast<std::uint32_t>(gen.scale_min.size()));
    push_doubles(bytes, gen.scale_min);
    push_doubles(bytes, gen.scale_max);

    const std::vector<std::uint8_t> blob = serialize_weights(gen.network).to_bytes();
    push_u64(bytes, blob.size());
    bytes.insert(bytes.end(), blob.begin(), blob.end());

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw DataError("failed writing " + path.string());
}

TrainedGenerator load_generator(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());

    ByteReader r{bytes.data(), bytes.size()};
    char magic[4];
    r.take(magic, 4);
    if (std::memcmp(magic, kGenMagic, 4) != 0)
        throw EngineError("generator file: bad magic");

    const std::uint32_t variant_tag = r.u32();
    if (variant_tag > 2)
        throw EngineError("generator file: unknown variant tag");
    const auto variant = static_cast<GanVariant>(variant_tag);
    const std::size_t latent_dim = r.u32();
    const std::size_t feature_dim = r.u32();

    const std::uint32_t hidden_count = r.u32();
    std::vector<std::size_t> hidden(hidden_count);
    for (auto& w : hidden)
        w = r.u32();

    const std::uint32_t scale_count = r.u32();
    std::vector<double> scale_min = r.doubles(scale_count);
    std::vector<double> scale_max = r.doubles(scale_count);

    const std::uint64_t blob_size = r.u64();
    if (blob_size != r.left)
        throw EngineError("generator file: payload size mismatch");
    const WeightBlob blob = WeightBlob::from_bytes(r.p, r.left);

    Rng scratch(0);
    const std::size_t extra = variant == GanVariant::cgan ? 1 : 0;
    Network net = make_generator(latent_dim + extra, feature_dim, hidden, scratch);
    deserialize_weights(blob, net);

    return TrainedGenerator{std::move(net), variant,   latent_dim, feature_dim,
                            {},             scale_min, scale_max};
}

} // namespace fedbal
