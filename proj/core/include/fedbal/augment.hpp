#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedbal/dataset.hpp"
#include "fedbal/layers.hpp"
#include "fedbal/rng.hpp"

namespace fedbal {

/// Nearest-neighbor interpolation settings. An unset target balances the
/// classes; an explicit target asks for that many synthetic rows.
struct SmoteConfig {
    std::size_t k_neighbors = 5;
    std::optional<long long> target;
};

/// Synthesizes minority-class rows by interpolating each base row toward one
/// of its k nearest minority neighbors (Euclidean distance, uniform pick,
/// uniform interpolation factor). Returns the rows only; the caller attaches
/// label and provenance. Throws DataError when the minority class has no
/// more rows than k_neighbors, ConfigError on a negative target or zero k.
Matrix smote(const LabeledDataset& data, const SmoteConfig& cfg, Rng& rng);

enum class GanVariant { gan, cgan, wgan_gp };

std::string variant_name(GanVariant v);
GanVariant variant_from_name(const std::string& name);

/// Fired once per optimizer step so callers can audit the update schedule.
struct GanStepEvent {
    enum class Kind { discriminator, generator };
    std::size_t epoch = 0;
    Kind kind = Kind::discriminator;
    const Network& discriminator;
    const Network& generator;
};

struct GanConfig {
    std::size_t latent_dim = 13;
    std::size_t batch_size = 64;
    std::size_t epochs = 100;
    std::vector<std::size_t> generator_hidden = {512, 256, 128};
    std::vector<std::size_t> discriminator_hidden = {128, 64};
    double learning_rate = 0.001;
    double wgan_learning_rate = 0.0001;
    double clip_value = 0.01;
    bool clip_critic = true;
    double lambda_gp = 10.0;
    std::size_t critic_iterations = 5;
    std::function<void(const GanStepEvent&)> observer;
};

/// Throws ConfigError on out-of-range fields.
void validate_gan_config(const GanConfig& cfg);

struct EpochLog {
    std::size_t epoch = 0;
    double g_loss = 0.0;
    double d_loss = 0.0;
    double minimax = 0.0;
};

/// "epoch,g_loss,d_loss,minimax_value" header plus one row per epoch.
std::string loss_curve_csv(const std::vector<EpochLog>& history);

/// A generator network ready to sample synthetic rows, plus the training
/// diagnostics and the scaling that maps rows back to raw feature units.
struct TrainedGenerator {
    Network network;
    GanVariant variant = GanVariant::gan;
    std::size_t latent_dim = 0;
    std::size_t feature_dim = 0;
    std::vector<EpochLog> history;
    std::vector<double> scale_min;
    std::vector<double> scale_max;

    /// n rows in [0,1]^feature_dim. Conditional generators sample label 1.
    Matrix sample(std::size_t n, Rng& rng);
    /// Conditional sampling; throws EngineError for unconditional variants.
    Matrix sample_conditioned(std::size_t n, int label, Rng& rng);
};

void save_generator(const std::filesystem::path& path, const TrainedGenerator& gen);
TrainedGenerator load_generator(const std::filesystem::path& path);

/// Mean of -ln(D(G(z))) with probabilities clamped away from 0.
double generator_loss(const Matrix& d_on_fake);

/// mean(-ln D(x)) + mean(-ln(1 - D(G(z)))).
double discriminator_loss(const Matrix& d_on_real, const Matrix& d_on_fake);

/// E[ln D(x)] + E[ln(1 - D(G(z)))]; the value of the adversarial game,
/// equal to -discriminator_loss on the same batches.
double minimax_value(const Matrix& d_on_real, const Matrix& d_on_fake);

/// Mean over rows of (||d critic / d x at a random interpolate|| - 1)^2,
/// with one U[0,1] mixing weight per row. The graph form stays
/// differentiable with respect to the critic parameters.
Tensor gradient_penalty_t(Network& critic, const Matrix& real_batch,
                          const Matrix& fake_batch, Rng& rng);
double gradient_penalty(Network& critic, const Matrix& real_batch,
                        const Matrix& fake_batch, Rng& rng);

/// mean(d_fake_out) - mean(d_real_out) + lambda * gp.
double critic_loss_gp(const Matrix& d_real_out, const Matrix& d_fake_out,
                      double gp, double lambda);

/// Adversarial training on minority rows scaled to [0,1]: per batch, one
/// discriminator step (real vs fresh fakes, weights clipped afterwards)
/// followed by one generator step through the frozen discriminator. Adam
/// plus binary cross-entropy on both sides.
TrainedGenerator train_gan(const Matrix& minority_rows, const GanConfig& cfg, Rng& rng);

/// Label-conditioned variant trained on the full dataset; the label rides
/// as one extra input column on both networks.
TrainedGenerator train_cgan(const LabeledDataset& data, const GanConfig& cfg, Rng& rng);

/// Wasserstein training with gradient penalty: critic_iterations critic
/// steps per generator step, linear critic head, RMSprop on both networks,
/// optional weight clipping on top of the penalty.
TrainedGenerator train_wgan_gp(const Matrix& minority_rows, const GanConfig& cfg, Rng& rng);

enum class BalanceMethod { smote, gan_minority, cgan, smote_gan, wgan_gp };

std::string method_name(BalanceMethod m);
BalanceMethod method_from_name(const std::string& name);

struct BalanceConfig {
    SmoteConfig smote;
    GanConfig gan;
    /// smote_gan only: keep the interpolated rows in the output and let the
    /// generator fill the remaining half of the quota.
    bool keep_smote_rows = false;
};

/// Returns the input rows plus exactly as many synthetic minority rows as
/// the class gap, so both classes end up with the majority count. Synthetic
/// rows carry the minority label and the synthetic provenance flag; real
/// rows pass through untouched.
LabeledDataset balance(const LabeledDataset& data, BalanceMethod method,
                       const BalanceConfig& cfg, Rng& rng);

} // namespace fedbal
