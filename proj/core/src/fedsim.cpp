#include "fedbal/fedsim.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstring>
#include <exception>
#include <thread>
#include <utility>

#include "fedbal/error.hpp"
#include "fedbal/losses.hpp"
#include "fedbal/models.hpp"

namespace fedbal {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string cell(const std::optional<double>& v) {
    return v ? fmt(*v) : std::string();
}

Matrix take_rows(const Matrix& src, const std::vector<std::size_t>& order,
                 std::size_t start, std::size_t count) {
    Matrix out(count, src.cols());
    for (std::size_t r = 0; r < count; ++r)
        std::memcpy(out.data() + r * src.cols(), src.data() + order[start + r] * src.cols(),
                    src.cols() * sizeof(double));
    return out;
}

std::vector<Matrix> grad_values(const Tensor& loss, std::vector<Tensor>& params) {
    std::vector<Tensor> grads = gradients(loss, params);
    std::vector<Matrix> out;
    out.reserve(grads.size());
    for (const Tensor& g : grads)
        out.push_back(g.value());
    return out;
}

/// Mini-batch descent over shuffled epochs; returns the sample-weighted
/// mean training loss per epoch. Tail batches are kept, so every row
/// contributes each epoch.
std::vector<double> train_epochs(Network& net, const LabeledDataset& data, std::size_t epochs,
                                 std::size_t batch_size, Optimizer& opt, Rng& rng) {
    const std::size_t n = data.size();
    std::vector<double> curve;
    curve.reserve(epochs);
    net.set_training(true);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const std::vector<std::size_t> order = rng.permutation(n);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t count = std::min(batch_size, n - start);
            const Matrix batch = take_rows(data.features, order, start, count);
            std::vector<double> targets(count);
            for (std::size_t r = 0; r < count; ++r)
                targets[r] = static_cast<double>(data.labels[order[start + r]]);

            const Tensor out = net.forward_t(Tensor::constant(batch), &rng);
            const Tensor loss_t = bce_loss_t(out, Matrix::column(targets));
            std::vector<Tensor> params = net.parameters();
            opt.step(params, grad_values(loss_t, params));
            loss_sum += loss_t.value().at(0, 0) * static_cast<double>(count);
        }
        curve.push_back(loss_sum / static_cast<double>(n));
    }
    net.set_training(false);
    return curve;
}

std::string station_prefix(int station_id) {
    return "station " + std::to_string(station_id) + ": ";
}

template <typename F>
auto with_station(int station_id, F&& f) {
    try {
        return f();
    } catch (const EngineError& e) {
        throw EngineError(station_prefix(station_id) + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(station_prefix(station_id) + e.what());
    } catch (const DataError& e) {
        throw DataError(station_prefix(station_id) + e.what());
    } catch (const DivergenceError& e) {
        throw DivergenceError(station_prefix(station_id) + e.what());
    }
}

} // namespace

void validate_federation_config(const FederationConfig& cfg) {
    if (cfg.rounds == 0)
        throw ConfigError("federation config: rounds must be at least 1");
    if (cfg.local_epochs == 0)
        throw ConfigError("federation config: local_epochs must be at least 1");
    if (cfg.batch_size == 0)
        throw ConfigError("federation config: batch_size must be at least 1");
    if (!(cfg.learning_rate > 0.0))
        throw ConfigError("federation config: learning_rate must be positive");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
        throw ConfigError("federation config: momentum must lie in [0, 1)");
    if (!(cfg.noise_stddev >= 0.0))
        throw ConfigError("federation config: noise_stddev must be non-negative");
    if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0))
        throw ConfigError("federation config: threshold must lie in (0, 1)");
    if (cfg.parallel_clients == 0)
        throw ConfigError("federation config: parallel_clients must be at least 1");
}

ClientState make_client(int station_id, LabeledDataset train, LabeledDataset validation,
                        const FederationConfig& cfg, std::uint64_t seed) {
    if (train.size() == 0)
        throw DataError(station_prefix(station_id) + "no training rows");
    validate(train);
    if (validation.size() > 0) {
        validate(validation);
        if (validation.dim() != train.dim())
            throw DataError(station_prefix(station_id) + "validation width differs from train");
    }

    ClientState client;
    client.station_id = station_id;
    const auto index = static_cast<std::uint64_t>(station_id);
    Rng init(derive_seed(seed, "model-init", index));
    client.net = make_classifier({train.dim(), cfg.hidden, true, cfg.noise_stddev}, init);
    client.optimizer = Optimizer::sgd_momentum(cfg.learning_rate, cfg.momentum);
    client.rng = Rng(derive_seed(seed, "train", index));
    client.train = std::move(train);
    client.validation = std::move(validation);
    return client;
}

ServerState make_server(LabeledDataset test_set, const FederationConfig& cfg,
                        std::uint64_t seed) {
    if (test_set.size() == 0)
        throw DataError("make_server: empty test set");
    validate(test_set);

    ServerState server;
    Rng init(derive_seed(seed, "model-init", 0));
    Network net = make_classifier({test_set.dim(), cfg.hidden, true, cfg.noise_stddev}, init);
    server.global_weights = serialize_weights(net);
    server.test = std::move(test_set);
    return server;
}

LocalUpdate local_train(ClientState& client, const WeightBlob& global_weights,
                        const FederationConfig& cfg) {
    if (client.train.size() == 0)
        throw DataError(station_prefix(client.station_id) + "no training rows");
    deserialize_weights(global_weights, client.net);
    train_epochs(client.net, client.train, cfg.local_epochs, cfg.batch_size,
                 client.optimizer, client.rng);
    const MetricsReport report = evaluate(client.net, client.validation, cfg.threshold);
    client.history.push_back(report);
    return {serialize_weights(client.net), client.train.size(), report};
}

WeightBlob aggregate(const std::vector<std::pair<WeightBlob, std::size_t>>& updates) {
    if (updates.empty())
        throw EngineError("aggregate: no updates");
    for (const auto& [blob, count] : updates)
        if (!blob.same_shape(updates.front().first))
            throw EngineError("aggregate: weight shapes differ");

    // running weighted mean: m += (n_i / N_cumulative) * (w_i - m)
    WeightBlob mean;
    bool seeded = false;
    double total = 0.0;
    for (const auto& [blob, count] : updates) {
        if (count == 0)
            continue;
        const auto n = static_cast<double>(count);
        total += n;
        if (!seeded) {
            mean = blob;
            seeded = true;
            continue;
        }
        const double coef = n / total;
        for (std::size_t j = 0; j < mean.payload.size(); ++j)
            mean.payload[j] += coef * (blob.payload[j] - mean.payload[j]);
    }
    if (total == 0.0)
        throw DataError("aggregate: zero total samples");
    return mean;
}

std::string rounds_csv(const std::vector<MetricsReport>& rounds) {
    std::string out = "round,loss,accuracy,auc,g_mean\n";
    for (std::size_t i = 0; i < rounds.size(); ++i) {
        const MetricsReport& r = rounds[i];
        out += std::to_string(i + 1) + ',' + fmt(r.loss) + ',' + fmt(r.accuracy) + ',' +
               cell(r.auc) + ',' + fmt(r.g_mean) + '\n';
    }
    return out;
}

std::string locals_csv(const std::vector<LocalReport>& locals) {
    std::string out = "station_id,split,loss,accuracy,auc,g_mean\n";
    for (const LocalReport& l : locals) {
        const MetricsReport& r = l.report;
        out += std::to_string(l.station_id) + ',' + l.split + ',' + fmt(r.loss) + ',' +
               fmt(r.accuracy) + ',' + cell(r.auc) + ',' + fmt(r.g_mean) + '\n';
    }
    return out;
}

FederationTrace run_federation(ServerState& server, std::vector<ClientState>& clients,
                               const FederationConfig& cfg) {
    validate_federation_config(cfg);
    if (clients.empty())
        throw ConfigError("run_federation: no clients");

    // evaluation instance of the shared architecture; weights come from the
    // blob each round, so the init stream here is irrelevant
    Rng scratch(0);
    Network eval_net =
        make_classifier({server.test.dim(), cfg.hidden, true, cfg.noise_stddev}, scratch);

    std::vector<std::size_t> by_station(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i)
        by_station[i] = i;
    std::sort(by_station.begin(), by_station.end(), [&](std::size_t a, std::size_t b) {
        return clients[a].station_id < clients[b].station_id;
    });

    FederationTrace trace;
    for (std::size_t round = 1; round <= cfg.rounds; ++round) {
        std::vector<LocalUpdate> results(clients.size());
        std::vector<std::exception_ptr> failures(clients.size());

        const std::size_t workers =
            std::min<std::size_t>(cfg.parallel_clients, clients.size());
        if (workers <= 1) {
            for (std::size_t i = 0; i < clients.size(); ++i)
                results[i] = with_station(clients[i].station_id, [&] {
                    return local_train(clients[i], server.global_weights, cfg);
                });
        } else {
            std::atomic<std::size_t> next{0};
            auto work = [&] {
                for (std::size_t i = next.fetch_add(1); i < clients.size();
                     i = next.fetch_add(1)) {
                    try {
                        results[i] = with_station(clients[i].station_id, [&] {
                            return local_train(clients[i], server.global_weights, cfg);
                        });
                    } catch (...) {
                        failures[i] = std::current_exception();
                    }
                }
            };
            std::vector<std::thread> pool;
            pool.reserve(workers);
            for (std::size_t t = 0; t < workers; ++t)
                pool.emplace_back(work);
            for (std::thread& t : pool)
                t.join();
            for (std::size_t i : by_station)
                if (failures[i])
                    std::rethrow_exception(failures[i]);
        }

        std::vector<std::pair<WeightBlob, std::size_t>> updates;
        updates.reserve(clients.size());
        for (std::size_t i : by_station)
            updates.emplace_back(std::move(results[i].weights), results[i].sample_count);

        server.global_weights = aggregate(updates);
        server.round = round;
        deserialize_weights(server.global_weights, eval_net);
        const MetricsReport global = evaluate(eval_net, server.test, cfg.threshold);
        server.history.push_back(global);
        trace.rounds.push_back(global);
    }

    for (std::size_t i : by_station) {
        ClientState& client = clients[i];
        const MetricsReport report = with_station(client.station_id, [&] {
            deserialize_weights(server.global_weights, client.net);
            return evaluate(client.net, client.validation, cfg.threshold);
        });
        trace.locals.push_back({client.station_id, "validation", report});
    }
    return trace;
}

CentralizedResult run_centralized(const LabeledDataset& train, const LabeledDataset& held_out,
                                  const FederationConfig& cfg, std::uint64_t seed,
                                  std::size_t epochs) {
    validate_federation_config(cfg);
    if (epochs == 0)
        throw ConfigError("run_centralized: epochs must be at least 1");
    if (train.size() == 0)
        throw DataError("run_centralized: empty training set");
    validate(train);

    Rng init(derive_seed(seed, "model-init", 0));
    Network net = make_classifier({train.dim(), cfg.hidden, false, 0.0}, init);
    Optimizer opt = Optimizer::sgd_momentum(cfg.learning_rate, cfg.momentum);
    Rng rng(derive_seed(seed, "train", 0));

    CentralizedResult result;
    result.loss_curve = train_epochs(net, train, epochs, cfg.batch_size, opt, rng);
    result.report = evaluate(net, held_out, cfg.threshold);
    result.weights = serialize_weights(net);
    return result;
}

} // namespace fedbal
