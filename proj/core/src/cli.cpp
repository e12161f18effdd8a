#include "fedbal/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "fedbal/error.hpp"
#include "fedbal/rng.hpp"

namespace fedbal {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return s.substr(b, e - b);
}

[[noreturn]] void bad_line(std::size_t line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

double to_double(const ConfigEntry& e) {
    const char* begin = e.value.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (e.value.empty() || end != begin + e.value.size())
        bad_line(e.line, "value '" + e.value + "' for '" + e.key + "' is not a number");
    return v;
}

std::uint64_t to_u64(const ConfigEntry& e) {
    const bool digits = !e.value.empty() &&
                        std::all_of(e.value.begin(), e.value.end(),
                                    [](unsigned char c) { return std::isdigit(c); });
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(e.value.c_str(), &end, 10);
    if (!digits || errno == ERANGE)
        bad_line(e.line, "value '" + e.value + "' for '" + e.key +
                             "' is not an unsigned integer");
    return v;
}

std::size_t to_size(const ConfigEntry& e) { return static_cast<std::size_t>(to_u64(e)); }

bool to_bool(const ConfigEntry& e) {
    if (e.value == "true" || e.value == "1")
        return true;
    if (e.value == "false" || e.value == "0")
        return false;
    bad_line(e.line, "value '" + e.value + "' for '" + e.key + "' is not a boolean");
}

std::vector<std::string> to_list(const ConfigEntry& e) {
    std::vector<std::string> items;
    if (trim(e.value).empty())
        return items;
    std::stringstream in(e.value);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty())
            bad_line(e.line, "empty item in list for '" + e.key + "'");
        items.push_back(item);
    }
    return items;
}

std::vector<std::size_t> to_size_list(const ConfigEntry& e) {
    std::vector<std::size_t> sizes;
    for (const std::string& item : to_list(e)) {
        if (!std::all_of(item.begin(), item.end(),
                         [](unsigned char c) { return std::isdigit(c); }))
            bad_line(e.line, "value '" + item + "' for '" + e.key + "' is not an integer");
        sizes.push_back(static_cast<std::size_t>(std::strtoull(item.c_str(), nullptr, 10)));
    }
    return sizes;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i)
            out += ", ";
        out += items[i];
    }
    return out;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"experiment", {"method", "mode", "seed", "epochs"}},
        {"data",
         {"csv", "station_column", "feature_columns", "label_column", "positive_labels",
          "negative_labels"}},
        {"blobs",
         {"negative_rows", "positive_rows", "dims", "negative_mean", "positive_mean", "stddev",
          "stations"}},
        {"split", {"train", "validation", "test", "stratified"}},
        {"federation",
         {"rounds", "local_epochs", "batch_size", "learning_rate", "momentum", "noise_stddev",
          "threshold", "hidden", "parallel_clients"}},
        {"smote", {"k_neighbors", "keep_rows"}},
        {"gan",
         {"latent_dim", "batch_size", "epochs", "generator_hidden", "discriminator_hidden",
          "learning_rate", "wgan_learning_rate", "clip_value", "clip_critic", "lambda_gp",
          "critic_iterations"}},
        {"manifest", {"version", "started_at", "finished_at", "out_dir", "derived_seeds"}},
        {"outputs", {"files"}},
    };
    return keys;
}

void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.data.synthetic) {
        const BlobSpec& b = cfg.data.blobs;
        if (b.dims == 0)
            throw ConfigError("config: [blobs] dims must be at least 1");
        if (!(b.stddev > 0.0))
            throw ConfigError("config: [blobs] stddev must be positive");
        if (b.stations == 0)
            throw ConfigError("config: [blobs] stations must be at least 1");
        if (b.negative_rows + b.positive_rows == 0)
            throw ConfigError("config: [blobs] has no rows");
    } else {
        if (cfg.data.csv.empty())
            throw ConfigError("config: [data] is missing 'csv'");
        validate_schema(cfg.data.schema);
    }
    if (cfg.centralized_epochs == 0)
        throw ConfigError("config: [experiment] epochs must be at least 1");
    validate_split_spec(cfg.split);
    validate_federation_config(cfg.federation);
    validate_gan_config(cfg.balance.gan);
    if (cfg.balance.smote.k_neighbors == 0)
        throw ConfigError("config: [smote] k_neighbors must be at least 1");
}

// section headers with their line numbers; a bare [blobs] or [data] header
// selects that source even with every key defaulted
std::vector<std::pair<std::string, std::size_t>> section_scan(const std::string& text) {
    std::vector<std::pair<std::string, std::size_t>> sections;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r')
            raw.pop_back();
        const std::string s = trim(raw);
        if (s.size() >= 3 && s.front() == '[' && s.back() == ']')
            sections.emplace_back(trim(s.substr(1, s.size() - 2)), line);
    }
    return sections;
}

ExperimentConfig build_config(const std::vector<ConfigEntry>& entries,
                              const std::vector<std::pair<std::string, std::size_t>>& sections) {
    bool has_data = false;
    bool has_blobs = false;
    for (const auto& [name, line] : sections) {
        if (!known_keys().count(name))
            bad_line(line, "unknown section [" + name + "]");
        has_data = has_data || name == "data";
        has_blobs = has_blobs || name == "blobs";
    }
    for (const ConfigEntry& e : entries)
        if (!known_keys().at(e.section).count(e.key))
            bad_line(e.line, "unknown key '" + e.key + "' in [" + e.section + "]");

    ExperimentConfig cfg;
    std::set<std::string> data_keys;
    for (const ConfigEntry& e : entries) {
        if (e.section == "manifest" || e.section == "outputs")
            continue;
        if (e.section == "experiment") {
            if (e.key == "method") {
                try {
                    cfg.method = method_from_token(e.value);
                } catch (const ConfigError& err) {
                    bad_line(e.line, err.what());
                }
            } else if (e.key == "mode") {
                try {
                    cfg.mode = mode_from_name(e.value);
                } catch (const ConfigError& err) {
                    bad_line(e.line, err.what());
                }
            } else if (e.key == "seed") {
                cfg.seed = to_u64(e);
            } else {
                cfg.centralized_epochs = to_size(e);
            }
        } else if (e.section == "data") {
            data_keys.insert(e.key);
            Schema& s = cfg.data.schema;
            if (e.key == "csv")
                cfg.data.csv = e.value;
            else if (e.key == "station_column")
                s.station_column = e.value;
            else if (e.key == "feature_columns")
                s.feature_columns = to_list(e);
            else if (e.key == "label_column")
                s.label_column = e.value;
            else if (e.key == "positive_labels")
                s.positive_labels = to_list(e);
            else
                s.negative_labels = to_list(e);
        } else if (e.section == "blobs") {
            BlobSpec& b = cfg.data.blobs;
            if (e.key == "negative_rows")
                b.negative_rows = to_size(e);
            else if (e.key == "positive_rows")
                b.positive_rows = to_size(e);
            else if (e.key == "dims")
                b.dims = to_size(e);
            else if (e.key == "negative_mean")
                b.negative_mean = to_double(e);
            else if (e.key == "positive_mean")
                b.positive_mean = to_double(e);
            else if (e.key == "stddev")
                b.stddev = to_double(e);
            else
                b.stations = to_size(e);
        } else if (e.section == "split") {
            if (e.key == "train")
                cfg.split.train = to_double(e);
            else if (e.key == "validation")
                cfg.split.validation = to_double(e);
            else if (e.key == "test")
                cfg.split.test = to_double(e);
            else
                cfg.split.stratified = to_bool(e);
        } else if (e.section == "federation") {
            FederationConfig& f = cfg.federation;
            if (e.key == "rounds")
                f.rounds = to_size(e);
            else if (e.key == "local_epochs")
                f.local_epochs = to_size(e);
            else if (e.key == "batch_size")
                f.batch_size = to_size(e);
            else if (e.key == "learning_rate")
                f.learning_rate = to_double(e);
            else if (e.key == "momentum")
                f.momentum = to_double(e);
            else if (e.key == "noise_stddev")
                f.noise_stddev = to_double(e);
            else if (e.key == "threshold")
                f.threshold = to_double(e);
            else if (e.key == "hidden")
                f.hidden = to_size_list(e);
            else
                f.parallel_clients = to_size(e);
        } else if (e.section == "smote") {
            if (e.key == "k_neighbors")
                cfg.balance.smote.k_neighbors = to_size(e);
            else
                cfg.balance.keep_smote_rows = to_bool(e);
        } else {  // gan
            GanConfig& g = cfg.balance.gan;
            if (e.key == "latent_dim")
                g.latent_dim = to_size(e);
            else if (e.key == "batch_size")
                g.batch_size = to_size(e);
            else if (e.key == "epochs")
                g.epochs = to_size(e);
            else if (e.key == "generator_hidden")
                g.generator_hidden = to_size_list(e);
            else if (e.key == "discriminator_hidden")
                g.discriminator_hidden = to_size_list(e);
            else if (e.key == "learning_rate")
                g.learning_rate = to_double(e);
            else if (e.key == "wgan_learning_rate")
                g.wgan_learning_rate = to_double(e);
            else if (e.key == "clip_value")
                g.clip_value = to_double(e);
            else if (e.key == "clip_critic")
                g.clip_critic = to_bool(e);
            else if (e.key == "lambda_gp")
                g.lambda_gp = to_double(e);
            else
                g.critic_iterations = to_size(e);
        }
    }

    if (has_data && has_blobs)
        throw ConfigError("config: both [data] and [blobs] present; pick one data source");
    if (!has_data && !has_blobs)
        throw ConfigError("config: no data source; add a [data] or [blobs] section");
    cfg.data.synthetic = has_blobs;
    if (has_data)
        for (const char* required :
             {"csv", "station_column", "feature_columns", "label_column"})
            if (!data_keys.count(required))
                throw ConfigError(std::string("config: [data] is missing '") + required + "'");

    validate_experiment_config(cfg);
    return cfg;
}

std::string data_source_text(const DataSource& d) {
    std::ostringstream o;
    if (d.synthetic) {
        const BlobSpec& b = d.blobs;
        o << "[blobs]\n"
          << "negative_rows = " << b.negative_rows << "\n"
          << "positive_rows = " << b.positive_rows << "\n"
          << "dims = " << b.dims << "\n"
          << "negative_mean = " << fmt(b.negative_mean) << "\n"
          << "positive_mean = " << fmt(b.positive_mean) << "\n"
          << "stddev = " << fmt(b.stddev) << "\n"
          << "stations = " << b.stations << "\n";
    } else {
        const Schema& s = d.schema;
        o << "[data]\n"
          << "csv = " << d.csv.string() << "\n"
          << "station_column = " << s.station_column << "\n"
          << "feature_columns = " << join(s.feature_columns) << "\n"
          << "label_column = " << s.label_column << "\n"
          << "positive_labels = " << join(s.positive_labels) << "\n"
          << "negative_labels = " << join(s.negative_labels) << "\n";
    }
    return o.str();
}

std::string size_list_text(const std::vector<std::size_t>& sizes) {
    std::vector<std::string> items;
    items.reserve(sizes.size());
    for (std::size_t v : sizes)
        items.push_back(std::to_string(v));
    return join(items);
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    const auto prefix = [&](const std::exception& e) { return std::string(name) + ": " + e.what(); };
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(prefix(e));
    } catch (const DataError& e) {
        throw DataError(prefix(e));
    } catch (const DivergenceError& e) {
        throw DivergenceError(prefix(e));
    } catch (const EngineError& e) {
        throw EngineError(prefix(e));
    }
}

template <typename Fn>
auto with_station(int station_id, Fn&& fn) -> decltype(fn()) {
    const auto prefix = [&](const std::exception& e) {
        return "station " + std::to_string(station_id) + ": " + e.what();
    };
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(prefix(e));
    } catch (const DataError& e) {
        throw DataError(prefix(e));
    } catch (const DivergenceError& e) {
        throw DivergenceError(prefix(e));
    } catch (const EngineError& e) {
        throw EngineError(prefix(e));
    }
}

std::vector<StationPartition> blob_partitions(const BlobSpec& spec, std::uint64_t seed) {
    const LabeledDataset all =
        make_blobs(spec.negative_rows, spec.positive_rows, spec.dims, spec.negative_mean,
                   spec.positive_mean, spec.stddev, seed);
    std::vector<std::vector<std::size_t>> dealt(spec.stations);
    for (std::size_t i = 0; i < all.size(); ++i)
        dealt[i % spec.stations].push_back(i);

    std::vector<StationPartition> parts;
    parts.reserve(spec.stations);
    for (std::size_t i = 0; i < spec.stations; ++i) {
        StationPartition p;
        p.station_id = static_cast<int>(i) + 1;
        p.station_name = std::to_string(p.station_id);
        p.data = all.subset(dealt[i]);
        p.refresh_stats();
        parts.push_back(std::move(p));
    }
    return parts;
}

StationPartition merge_partitions(const std::vector<StationPartition>& parts) {
    StationPartition merged;
    merged.station_id = 0;
    merged.station_name = "pooled";
    std::size_t rows = 0;
    const std::size_t dim = parts.empty() ? 0 : parts.front().data.dim();
    for (const StationPartition& p : parts)
        rows += p.data.size();
    merged.data.features = Matrix(rows, dim);
    std::size_t at = 0;
    for (const StationPartition& p : parts) {
        std::memcpy(merged.data.features.data() + at * dim, p.data.features.data(),
                    p.data.features.size() * sizeof(double));
        at += p.data.size();
        merged.data.labels.insert(merged.data.labels.end(), p.data.labels.begin(),
                                  p.data.labels.end());
        merged.data.provenance.insert(merged.data.provenance.end(), p.data.provenance.begin(),
                                      p.data.provenance.end());
    }
    merged.refresh_stats();
    return merged;
}

LabeledDataset concat_rows(const std::vector<const LabeledDataset*>& parts) {
    std::size_t rows = 0;
    std::size_t dim = 0;
    for (const LabeledDataset* p : parts) {
        rows += p->size();
        if (p->dim() > 0)
            dim = p->dim();
    }
    LabeledDataset out;
    out.features = Matrix(rows, dim);
    std::size_t at = 0;
    for (const LabeledDataset* p : parts) {
        std::memcpy(out.features.data() + at * dim, p->features.data(),
                    p->features.size() * sizeof(double));
        at += p->size();
        out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
        out.provenance.insert(out.provenance.end(), p->provenance.begin(), p->provenance.end());
    }
    return out;
}

std::string format_utc_now() {
    const std::time_t now =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << text;
    out.flush();
    if (!out)
        throw DataError("cannot write " + path.string());
}

std::string curve_csv(const std::vector<double>& losses) {
    std::string out = "epoch,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i)
        out += std::to_string(i + 1) + "," + fmt(losses[i]) + "\n";
    return out;
}

std::string client_history_csv(const std::vector<ClientState>& clients) {
    std::vector<const ClientState*> order;
    order.reserve(clients.size());
    for (const ClientState& c : clients)
        order.push_back(&c);
    std::sort(order.begin(), order.end(), [](const ClientState* a, const ClientState* b) {
        return a->station_id < b->station_id;
    });

    std::string out = "station_id,round,loss,accuracy,auc,g_mean\n";
    for (const ClientState* c : order)
        for (std::size_t r = 0; r < c->history.size(); ++r) {
            const MetricsReport& m = c->history[r];
            out += std::to_string(c->station_id) + "," + std::to_string(r + 1) + "," +
                   fmt(m.loss) + "," + fmt(m.accuracy) + "," + (m.auc ? fmt(*m.auc) : "") +
                   "," + fmt(m.g_mean) + "\n";
        }
    return out;
}

struct PreparedExperiment {
    std::vector<ClientState> clients;
    ServerState server;
    LabeledDataset central_train;
    LabeledDataset central_heldout;
    std::vector<std::pair<std::string, std::uint64_t>> seeds;
};

PreparedExperiment prepare_experiment(const ExperimentConfig& cfg, bool quiet,
                                      std::ostream& log) {
    stage("config", [&] { validate_experiment_config(cfg); });

    PreparedExperiment prep;
    const auto note = [&](const std::string& name, std::uint64_t value) {
        prep.seeds.emplace_back(name, value);
    };

    const std::vector<StationPartition> loaded = stage("data", [&] {
        if (cfg.data.synthetic) {
            note("blobs", derive_seed(cfg.seed, "blobs", 0));
            return blob_partitions(cfg.data.blobs, cfg.seed);
        }
        return load_csv(cfg.data.csv, cfg.data.schema);
    });
    std::size_t total_rows = 0;
    for (const StationPartition& p : loaded)
        total_rows += p.data.size();
    if (!quiet)
        log << "data: " << loaded.size() << " stations, " << total_rows << " rows\n";

    std::vector<StationPartition> parts;
    if (cfg.mode == RunMode::centralized)
        parts.push_back(merge_partitions(loaded));
    else
        parts = loaded;

    std::vector<StationSplits> prepared = stage("data", [&] {
        std::vector<StationSplits> out;
        out.reserve(parts.size());
        for (const StationPartition& p : parts)
            out.push_back(with_station(p.station_id, [&] {
                SplitSpec spec = cfg.split;
                spec.seed = derive_seed(cfg.seed, "split-station",
                                        static_cast<std::uint64_t>(p.station_id));
                note("split-station-" + std::to_string(p.station_id), spec.seed);
                return prepare_station(p, spec);
            }));
        return out;
    });

    if (cfg.method) {
        stage("augment", [&] {
            std::size_t before = 0;
            std::size_t after = 0;
            for (StationSplits& s : prepared)
                with_station(s.station_id, [&] {
                    const std::uint64_t seed = derive_seed(
                        cfg.seed, "augment", static_cast<std::uint64_t>(s.station_id));
                    note("augment-station-" + std::to_string(s.station_id), seed);
                    Rng rng(seed);
                    before += s.splits.train.size();
                    s.splits.train = balance(s.splits.train, *cfg.method, cfg.balance, rng);
                    after += s.splits.train.size();
                });
            if (!quiet)
                log << "augment[" << method_token(cfg.method) << "]: train rows " << before
                    << " -> " << after << "\n";
        });
    }

    if (cfg.mode == RunMode::federated) {
        stage("data", [&] {
            std::vector<const LabeledDataset*> tests;
            for (StationSplits& s : prepared) {
                with_station(s.station_id, [&] {
                    note("model-init-" + std::to_string(s.station_id),
                         derive_seed(cfg.seed, "model-init",
                                     static_cast<std::uint64_t>(s.station_id)));
                    note("train-" + std::to_string(s.station_id),
                         derive_seed(cfg.seed, "train",
                                     static_cast<std::uint64_t>(s.station_id)));
                    prep.clients.push_back(make_client(s.station_id, std::move(s.splits.train),
                                                       std::move(s.splits.validation),
                                                       cfg.federation, cfg.seed));
                });
                tests.push_back(&s.splits.test);
            }
            note("model-init-0", derive_seed(cfg.seed, "model-init", 0));
            prep.server = make_server(concat_rows(tests), cfg.federation, cfg.seed);
        });
    } else {
        note("model-init-0", derive_seed(cfg.seed, "model-init", 0));
        note("train-0", derive_seed(cfg.seed, "train", 0));
        prep.central_train = std::move(prepared.front().splits.train);
        prep.central_heldout = std::move(prepared.front().splits.test);
    }
    return prep;
}

ExperimentResult train_experiment(PreparedExperiment& prep, const ExperimentConfig& cfg,
                                  bool quiet, std::ostream& log) {
    ExperimentResult result;
    result.derived_seeds = prep.seeds;
    if (cfg.mode == RunMode::federated) {
        if (!quiet)
            log << "train: federated, " << cfg.federation.rounds << " rounds x "
                << prep.clients.size() << " clients\n";
        result.trace =
            stage("train", [&] { return run_federation(prep.server, prep.clients, cfg.federation); });
        if (result.trace.rounds.empty())
            throw EngineError("train: no rounds recorded");
        result.summary = result.trace.rounds.back();
    } else {
        if (!quiet)
            log << "train: centralized, " << cfg.centralized_epochs << " epochs\n";
        CentralizedResult central = stage("train", [&] {
            return run_centralized(prep.central_train, prep.central_heldout, cfg.federation,
                                   cfg.seed, cfg.centralized_epochs);
        });
        result.summary = central.report;
        result.loss_curve = std::move(central.loss_curve);
    }
    if (!quiet)
        log << "summary: accuracy=" << fmt4(result.summary.accuracy) << " loss="
            << fmt4(result.summary.loss) << " auc="
            << (result.summary.auc ? fmt4(*result.summary.auc) : "n/a") << " g_mean="
            << fmt4(result.summary.g_mean) << "\n";
    return result;
}

} // namespace

std::vector<ConfigEntry> parse_flat_config(const std::string& text) {
    std::vector<ConfigEntry> entries;
    std::string section;
    std::set<std::pair<std::string, std::string>> seen;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r')
            raw.pop_back();
        const std::string s = trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';')
            continue;
        if (s.front() == '[') {
            if (s.size() < 3 || s.back() != ']')
                bad_line(line, "malformed section header '" + s + "'");
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty())
                bad_line(line, "empty section name");
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            bad_line(line, "expected key = value, got '" + s + "'");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty())
            bad_line(line, "empty key");
        if (section.empty())
            bad_line(line, "key '" + key + "' outside any section");
        if (!seen.insert({section, key}).second)
            bad_line(line, "duplicate key '" + key + "' in [" + section + "]");
        entries.push_back({section, key, value, line});
    }
    return entries;
}

std::string mode_name(RunMode mode) {
    return mode == RunMode::centralized ? "centralized" : "federated";
}

RunMode mode_from_name(const std::string& name) {
    if (name == "centralized")
        return RunMode::centralized;
    if (name == "federated")
        return RunMode::federated;
    throw ConfigError("unknown mode '" + name + "'; use centralized or federated");
}

std::string table_label(const std::optional<BalanceMethod>& method) {
    if (!method)
        return "Imbalanced";
    switch (*method) {
    case BalanceMethod::smote: return "SMOTE";
    case BalanceMethod::gan_minority: return "Minority GANs";
    case BalanceMethod::cgan: return "CGANs";
    case BalanceMethod::smote_gan: return "SMOTE GANs";
    case BalanceMethod::wgan_gp: return "WGANs-GP";
    }
    throw EngineError("table_label: unknown method");
}

std::string method_token(const std::optional<BalanceMethod>& method) {
    return method ? method_name(*method) : "none";
}

std::optional<BalanceMethod> method_from_token(const std::string& token) {
    if (token == "none")
        return std::nullopt;
    return method_from_name(token);
}

ExperimentConfig parse_experiment_config(const std::string& text) {
    return build_config(parse_flat_config(text), section_scan(text));
}

LoadedConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();

    const std::vector<ConfigEntry> entries = parse_flat_config(buffer.str());
    LoadedConfig loaded;
    loaded.config = build_config(entries, section_scan(buffer.str()));
    for (const ConfigEntry& e : entries)
        if (e.section == "manifest" && e.key == "out_dir" && !e.value.empty())
            loaded.recorded_out_dir = std::filesystem::path(e.value);
    if (!loaded.config.data.synthetic && loaded.config.data.csv.is_relative())
        loaded.config.data.csv =
            (path.parent_path() / loaded.config.data.csv).lexically_normal();
    return loaded;
}

std::string config_text(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "[experiment]\n"
      << "method = " << method_token(c.method) << "\n"
      << "mode = " << mode_name(c.mode) << "\n"
      << "seed = " << c.seed << "\n"
      << "epochs = " << c.centralized_epochs << "\n"
      << "\n"
      << data_source_text(c.data) << "\n"
      << "[split]\n"
      << "train = " << fmt(c.split.train) << "\n"
      << "validation = " << fmt(c.split.validation) << "\n"
      << "test = " << fmt(c.split.test) << "\n"
      << "stratified = " << (c.split.stratified ? "true" : "false") << "\n"
      << "\n"
      << "[federation]\n"
      << "rounds = " << c.federation.rounds << "\n"
      << "local_epochs = " << c.federation.local_epochs << "\n"
      << "batch_size = " << c.federation.batch_size << "\n"
      << "learning_rate = " << fmt(c.federation.learning_rate) << "\n"
      << "momentum = " << fmt(c.federation.momentum) << "\n"
      << "noise_stddev = " << fmt(c.federation.noise_stddev) << "\n"
      << "threshold = " << fmt(c.federation.threshold) << "\n"
      << "hidden = " << size_list_text(c.federation.hidden) << "\n"
      << "parallel_clients = " << c.federation.parallel_clients << "\n"
      << "\n"
      << "[smote]\n"
      << "k_neighbors = " << c.balance.smote.k_neighbors << "\n"
      << "keep_rows = " << (c.balance.keep_smote_rows ? "true" : "false") << "\n"
      << "\n"
      << "[gan]\n"
      << "latent_dim = " << c.balance.gan.latent_dim << "\n"
      << "batch_size = " << c.balance.gan.batch_size << "\n"
      << "epochs = " << c.balance.gan.epochs << "\n"
      << "generator_hidden = " << size_list_text(c.balance.gan.generator_hidden) << "\n"
      << "discriminator_hidden = " << size_list_text(c.balance.gan.discriminator_hidden)
      << "\n"
      << "learning_rate = " << fmt(c.balance.gan.learning_rate) << "\n"
      << "wgan_learning_rate = " << fmt(c.balance.gan.wgan_learning_rate) << "\n"
      << "clip_value = " << fmt(c.balance.gan.clip_value) << "\n"
      << "clip_critic = " << (c.balance.gan.clip_critic ? "true" : "false") << "\n"
      << "lambda_gp = " << fmt(c.balance.gan.lambda_gp) << "\n"
      << "critic_iterations = " << c.balance.gan.critic_iterations << "\n";
    return o.str();
}

std::string manifest_text(const RunManifest& m) {
    std::vector<std::string> seeds;
    seeds.reserve(m.derived_seeds.size());
    for (const auto& [name, value] : m.derived_seeds)
        seeds.push_back(name + ":" + std::to_string(value));

    std::ostringstream o;
    o << "[manifest]\n"
      << "version = " << m.version << "\n"
      << "started_at = " << m.started_at << "\n"
      << "finished_at = " << m.finished_at << "\n"
      << "out_dir = " << m.out_dir.string() << "\n"
      << "derived_seeds = " << join(seeds) << "\n"
      << "\n"
      << "[outputs]\n"
      << "files = " << join(m.outputs) << "\n"
      << "\n"
      << config_text(m.config);
    return o.str();
}

std::string summary_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::string out = "Method,Accuracy,Loss,AUC,G-mean\n";
    for (const auto& [label, m] : rows)
        out += label + "," + fmt(m.accuracy) + "," + fmt(m.loss) + "," +
               (m.auc ? fmt(*m.auc) : "") + "," + fmt(m.g_mean) + "\n";
    return out;
}

std::string stations_csv(
    const std::vector<std::pair<std::string, std::vector<LocalReport>>>& rows) {
    std::string out = "Method,Station,Accuracy,Loss,AUC,G-mean\n";
    for (const auto& [label, locals] : rows)
        for (const LocalReport& l : locals)
            out += label + "," + std::to_string(l.station_id) + "," + fmt(l.report.accuracy) +
                   "," + fmt(l.report.loss) + "," + (l.report.auc ? fmt(*l.report.auc) : "") +
                   "," + fmt(l.report.g_mean) + "\n";
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, bool quiet, std::ostream& log) {
    PreparedExperiment prep = prepare_experiment(config, quiet, log);
    return train_experiment(prep, config, quiet, log);
}

ExperimentResult execute_run(const ExperimentConfig& config,
                             const std::filesystem::path& out_dir, bool quiet,
                             std::ostream& log) {
    PreparedExperiment prep = prepare_experiment(config, quiet, log);

    RunManifest manifest;
    manifest.out_dir = std::filesystem::absolute(out_dir).lexically_normal();
    manifest.config = config;
    manifest.derived_seeds = prep.seeds;
    if (config.mode == RunMode::federated)
        manifest.outputs = {"rounds.csv", "locals.csv", "clients.csv", "summary.csv"};
    else
        manifest.outputs = {"loss_curve.csv", "summary.csv"};
    manifest.started_at = format_utc_now();

    stage("report", [&] {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec)
            throw DataError("cannot create out-dir " + out_dir.string() + ": " + ec.message());
        write_text_file(out_dir / "manifest.txt", manifest_text(manifest));
    });

    ExperimentResult result = train_experiment(prep, config, quiet, log);

    stage("report", [&] {
        if (config.mode == RunMode::federated) {
            write_text_file(out_dir / "rounds.csv", rounds_csv(result.trace.rounds));
            write_text_file(out_dir / "locals.csv", locals_csv(result.trace.locals));
            write_text_file(out_dir / "clients.csv", client_history_csv(prep.clients));
        } else {
            write_text_file(out_dir / "loss_curve.csv", curve_csv(result.loss_curve));
        }
        write_text_file(out_dir / "summary.csv",
                        summary_csv({{table_label(config.method), result.summary}}));
        manifest.finished_at = format_utc_now();
        write_text_file(out_dir / "manifest.txt", manifest_text(manifest));
    });
    if (!quiet)
        log << "outputs: " << out_dir.string() << "\n";
    return result;
}

int error_exit_code(const std::exception& error) {
    if (dynamic_cast<const ConfigError*>(&error))
        return 2;
    if (dynamic_cast<const DataError*>(&error))
        return 3;
    if (dynamic_cast<const DivergenceError*>(&error))
        return 4;
    return 1;
}

int cmd_run(const std::filesystem::path& config_path, const CliOptions& options,
            std::ostream& out, std::ostream& err) {
    try {
        const LoadedConfig loaded =
            stage("config", [&] { return load_config_file(config_path); });
        ExperimentConfig cfg = loaded.config;
        if (options.seed)
            cfg.seed = *options.seed;
        if (options.parallel_clients)
            cfg.federation.parallel_clients = *options.parallel_clients;
        const std::filesystem::path dir =
            options.out_dir ? *options.out_dir
                            : loaded.recorded_out_dir.value_or(std::filesystem::path("out"));
        execute_run(cfg, dir, options.quiet, out);
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return error_exit_code(e);
    }
}

int cmd_compare(const std::vector<std::filesystem::path>& config_paths,
                const std::vector<std::string>& method_tokens, const CliOptions& options,
                std::ostream& out, std::ostream& err) {
    try {
        std::vector<ExperimentConfig> runs;
        std::vector<std::string> tokens;
        stage("config", [&] {
            if (!method_tokens.empty()) {
                if (config_paths.size() != 1)
                    throw ConfigError("compare: --methods takes exactly one base config");
                const LoadedConfig base = load_config_file(config_paths.front());
                for (const std::string& token : method_tokens) {
                    ExperimentConfig cfg = base.config;
                    cfg.method = method_from_token(token);
                    runs.push_back(std::move(cfg));
                    tokens.push_back(token);
                }
            } else {
                if (config_paths.size() < 2)
                    throw ConfigError("compare: need at least two configs or --methods");
                for (const std::filesystem::path& path : config_paths) {
                    runs.push_back(load_config_file(path).config);
                    tokens.push_back(method_token(runs.back().method));
                }
            }
            const std::uint64_t seed = options.seed ? *options.seed : runs.front().seed;
            for (std::size_t i = 0; i < runs.size(); ++i) {
                runs[i].seed = seed;
                if (options.parallel_clients)
                    runs[i].federation.parallel_clients = *options.parallel_clients;
                if (data_source_text(runs[i].data) != data_source_text(runs.front().data))
                    throw ConfigError("compare: run " + std::to_string(i + 1) +
                                      " uses a different data source");
            }
        });

        const std::filesystem::path root =
            options.out_dir.value_or(std::filesystem::path("out"));
        std::vector<std::pair<std::string, MetricsReport>> summary_rows;
        std::vector<std::pair<std::string, std::vector<LocalReport>>> station_rows;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (!options.quiet)
                out << "== " << table_label(runs[i].method) << " ==\n";
            const ExperimentResult result = execute_run(
                runs[i], root / (std::to_string(i + 1) + "-" + tokens[i]), options.quiet, out);
            summary_rows.emplace_back(table_label(runs[i].method), result.summary);
            if (runs[i].mode == RunMode::federated)
                station_rows.emplace_back(table_label(runs[i].method), result.trace.locals);
        }

        const std::string comparison = summary_csv(summary_rows);
        stage("report", [&] {
            write_text_file(root / "comparison.csv", comparison);
            if (!station_rows.empty())
                write_text_file(root / "stations.csv", stations_csv(station_rows));
        });
        if (!options.quiet)
            out << comparison;
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return error_exit_code(e);
    }
}

int cmd_stats(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path,
              const CliOptions& options, std::ostream& out, std::ostream& err) {
    (void)options;
    try {
        const Schema schema = stage("config", [&] {
            std::ifstream in(schema_path, std::ios::binary);
            if (!in)
                throw ConfigError("cannot open schema file: " + schema_path.string());
            std::ostringstream buffer;
            buffer << in.rdbuf();

            Schema s;
            std::set<std::string> present;
            for (const ConfigEntry& e : parse_flat_config(buffer.str())) {
                if (e.section != "data")
                    bad_line(e.line, "schema file allows only a [data] section");
                if (e.key == "station_column")
                    s.station_column = e.value;
                else if (e.key == "feature_columns")
                    s.feature_columns = to_list(e);
                else if (e.key == "label_column")
                    s.label_column = e.value;
                else if (e.key == "positive_labels")
                    s.positive_labels = to_list(e);
                else if (e.key == "negative_labels")
                    s.negative_labels = to_list(e);
                else
                    bad_line(e.line, "unknown key '" + e.key + "' in [data]");
                present.insert(e.key);
            }
            for (const char* required : {"station_column", "feature_columns", "label_column"})
                if (!present.count(required))
                    throw ConfigError(std::string("schema file is missing '") + required + "'");
            validate_schema(s);
            return s;
        });

        const std::vector<StationPartition> parts =
            stage("data", [&] { return load_csv(csv_path, schema); });

        const auto ratio_cell = [](std::size_t minority, std::size_t majority) {
            return minority + majority == 0 ? std::string("0.00")
                                            : fmt2(imbalance_ratio_2dp(minority, majority));
        };

        out << "station,rain,no_rain,total,ratio\n";
        std::size_t rain_total = 0;
        std::size_t dry_total = 0;
        for (const StationPartition& p : parts) {
            const std::size_t rain = p.data.count_label(1);
            const std::size_t dry = p.data.count_label(0);
            rain_total += rain;
            dry_total += dry;
            out << p.station_id << "," << rain << "," << dry << "," << (rain + dry) << ","
                << ratio_cell(p.minority_count, p.majority_count) << "\n";
        }
        out << "total," << rain_total << "," << dry_total << "," << (rain_total + dry_total)
            << ","
            << ratio_cell(std::min(rain_total, dry_total), std::max(rain_total, dry_total))
            << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return error_exit_code(e);
    }
}

} // namespace fedbal
