#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedbal/dataset.hpp"
#include "fedbal/layers.hpp"
#include "fedbal/metrics.hpp"
#include "fedbal/optim.hpp"
#include "fedbal/rng.hpp"
#include "fedbal/weights.hpp"

namespace fedbal {

struct FederationConfig {
    std::size_t rounds = 10;
    std::size_t local_epochs = 3;
    std::size_t batch_size = 64;
    double learning_rate = 0.001;
    double momentum = 0.9;
    double noise_stddev = 0.01;
    double threshold = 0.5;
    std::vector<std::size_t> hidden = {256, 128, 64, 32};
    std::size_t parallel_clients = 1;
};

void validate_federation_config(const FederationConfig& cfg);

/// One station: its data shards plus the training state that persists
/// across rounds (optimizer accumulators and rng stream position).
struct ClientState {
    int station_id = 0;
    LabeledDataset train;
    LabeledDataset validation;
    Network net;
    Optimizer optimizer = Optimizer::sgd_momentum(0.001, 0.9);
    Rng rng{0};
    std::vector<MetricsReport> history;

    std::size_t sample_count() const { return train.size(); }
};

struct ServerState {
    WeightBlob global_weights;
    std::size_t round = 0;
    LabeledDataset test;
    std::vector<MetricsReport> history;
};

ClientState make_client(int station_id, LabeledDataset train, LabeledDataset validation,
                        const FederationConfig& cfg, std::uint64_t seed);
ServerState make_server(LabeledDataset test_set, const FederationConfig& cfg,
                        std::uint64_t seed);

/// What a station sends back after a round: weights and counts only,
/// never data rows.
struct LocalUpdate {
    WeightBlob weights;
    std::size_t sample_count = 0;
    MetricsReport validation;
};

/// Loads the global weights into the client net, trains local_epochs over
/// shuffled mini-batches, and reports on the client's validation shard.
LocalUpdate local_train(ClientState& client, const WeightBlob& global_weights,
                        const FederationConfig& cfg);

/// Parameter-wise mean weighted by sample counts, in list order.
WeightBlob aggregate(const std::vector<std::pair<WeightBlob, std::size_t>>& updates);

struct LocalReport {
    int station_id = 0;
    std::string split;
    MetricsReport report;
};

struct FederationTrace {
    std::vector<MetricsReport> rounds;
    std::vector<LocalReport> locals;
};

std::string rounds_csv(const std::vector<MetricsReport>& rounds);
std::string locals_csv(const std::vector<LocalReport>& locals);

/// Runs the full schedule: per round broadcast, local training on every
/// client (station-id order fixes the aggregation sum), aggregate, evaluate
/// the global model on the server test set; afterwards the global model is
/// scored on every client's validation shard.
FederationTrace run_federation(ServerState& server, std::vector<ClientState>& clients,
                               const FederationConfig& cfg);

struct CentralizedResult {
    MetricsReport report;
    std::vector<double> loss_curve;
    WeightBlob weights;
};

/// Single-site training without the noise layer.
CentralizedResult run_centralized(const LabeledDataset& train, const LabeledDataset& held_out,
                                  const FederationConfig& cfg, std::uint64_t seed,
                                  std::size_t epochs = 30);

} // namespace fedbal
