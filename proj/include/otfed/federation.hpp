#pragma once

#include "otfed/data.hpp"
#include "otfed/model.hpp"
#include "otfed/parallel.hpp"
#include "otfed/pseudolabel.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace otfed::federation {

using model::ModelParams;
using model::TrainConfig;

namespace audit {

/// Counts every read of a client's private feature data. Tests reset it and
/// check that server-side steps leave it untouched.
inline std::atomic<long> client_data_reads{0};

} // namespace audit

enum class DataChoice { original, transported };

inline const char* choice_name(DataChoice c)
{
    return c == DataChoice::original ? "original" : "transported";
}

enum class Aggregation { accuracy, samples };

/// One simulated data owner. Private datasets are only reachable through
/// accessors that feed the audit counter.
class ClientState {
public:
    ClientState(std::string id, Dataset original, std::optional<Dataset> transported = std::nullopt)
        : client_id(std::move(id)), original_(std::move(original)), transported_(std::move(transported))
    {
        original_.require_labels("ClientState");
        if (transported_) {
            require(transported_->size() == original_.size() && transported_->labels == original_.labels,
                    "ClientState: transported data must keep the original rows and labels");
        }
    }

    [[nodiscard]] const Dataset& original_data() const
    {
        ++audit::client_data_reads;
        return original_;
    }

    [[nodiscard]] const Dataset* transported_data() const
    {
        ++audit::client_data_reads;
        return transported_ ? &*transported_ : nullptr;
    }

    [[nodiscard]] bool has_transported() const { return transported_.has_value(); }

    [[nodiscard]] const Dataset& active_data() const
    {
        return choice == DataChoice::transported && transported_ ? *transported_data() : original_data();
    }

    /// Sample count is shared with the server (FedAvg weights); features are not.
    [[nodiscard]] std::size_t sample_count() const { return original_.size(); }

    std::string client_id;
    DataChoice choice = DataChoice::original;
    ModelParams params;
    bool active = true;
    double best_val_acc = -std::numeric_limits<double>::infinity();
    int decline_streak = 0;
    std::optional<double> original_score;
    std::optional<double> transported_score;

private:
    Dataset original_;
    std::optional<Dataset> transported_;
};

/// What a client sends upstream each round.
struct ClientUpdate {
    std::string client_id;
    ModelParams params;
    std::size_t sample_count = 0;
};

struct ClientRoundEntry {
    std::string client_id;
    double validation_accuracy = 0.0;
    double coefficient = 0.0;
    bool active_after = true;
};

struct RoundRecord {
    int round = 0;
    std::vector<ClientRoundEntry> clients;  // sorted by client id
    double global_validation_accuracy = 0.0;
    bool halted = false;                    // no active client remained
    bool fallback_to_samples = false;       // every accuracy was zero
};

struct ServerState {
    ModelParams global_params;
    pseudolabel::PseudoLabeledValidation validation;
    int round_index = 0;
    std::vector<RoundRecord> history;
};

struct FederationConfig {
    int rounds = 50;
    TrainConfig local;  // epochs here are local epochs per round
    int patience = 3;
    Aggregation aggregation = Aggregation::accuracy;
    std::size_t threads = thread_limit();
};

// ---------------------------------------------------------------------------
// Aggregation rules (server side: params and scalars only)
// ---------------------------------------------------------------------------

/// Componentwise sum of coefficient_i * params_i.
inline ModelParams weighted_average(const std::vector<ModelParams>& params, const std::vector<double>& coefficients)
{
    require(!params.empty() && params.size() == coefficients.size(), "aggregate: need one coefficient per model");
    const auto d = params.front().dim();
    const auto k = params.front().classes();
    ModelParams out = model::init_params(d, k);
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i].dim() == d && params[i].classes() == k, "aggregate: parameter shape mismatch");
        out.weights += coefficients[i] * params[i].weights;
        out.bias += coefficients[i] * params[i].bias;
    }
    return out;
}

/// n_i / sum(n) coefficients.
inline std::vector<double> sample_coefficients(const std::vector<std::size_t>& counts)
{
    require(!counts.empty(), "fedavg: no clients");
    double total = 0.0;
    for (auto n : counts) {
        require(n > 0, "fedavg: sample counts must be positive");
        total += static_cast<double>(n);
    }
    std::vector<double> c;
    for (auto n : counts) {
        c.push_back(static_cast<double>(n) / total);
    }
    return c;
}

/// acc_i / sum(acc) coefficients; all-zero accuracies are an error.
inline std::vector<double> accuracy_coefficients(const std::vector<double>& accuracies)
{
    require(!accuracies.empty(), "fedavg: no clients");
    double total = 0.0;
    for (double a : accuracies) {
        require(a >= 0.0 && std::isfinite(a), "fedavg: accuracies must be finite and >= 0");
        total += a;
    }
    require(total > 0.0, "fedavg: all client accuracies are zero");
    std::vector<double> c;
    for (double a : accuracies) {
        c.push_back(a / total);
    }
    return c;
}

inline ModelParams fedavg_sample_weighted(const std::vector<ModelParams>& params, const std::vector<std::size_t>& counts)
{
    return weighted_average(params, sample_coefficients(counts));
}

inline ModelParams fedavg_accuracy_weighted(const std::vector<ModelParams>& params, const std::vector<double>& accuracies)
{
    return weighted_average(params, accuracy_coefficients(accuracies));
}

// ---------------------------------------------------------------------------
// Client side
// ---------------------------------------------------------------------------

/// Trains one throwaway model on each representation and keeps the transported
/// one only if it scores strictly higher on the pseudo-labelled validation set.
inline void select_representation(ClientState& client, const pseudolabel::PseudoLabeledValidation& validation,
                                  const TrainConfig& cfg)
{
    require(client.has_transported(), "select_representation: client '" + client.client_id + "' has no transported data");
    const Dataset& original = client.original_data();
    const Dataset& transported = *client.transported_data();
    const int k = std::max(num_classes(*original.labels), num_classes(validation.pseudo_labels));
    const auto d = static_cast<Eigen::Index>(original.dim());
    const auto m_orig = model::train_sgd(model::init_params(d, k), original, cfg);
    const auto m_trans = model::train_sgd(model::init_params(d, k), transported, cfg);
    client.original_score = model::accuracy(m_orig, validation.features, validation.pseudo_labels);
    client.transported_score = model::accuracy(m_trans, validation.features, validation.pseudo_labels);
    client.choice = *client.transported_score > *client.original_score ? DataChoice::transported : DataChoice::original;
}

/// Early-stop bookkeeping: a drop below the best accuracy seen extends the
/// decline streak; anything else resets it. `patience` consecutive drops
/// deactivate the client for good.
inline void update_participation(ClientState& client, double current_val_acc, int patience)
{
    if (!client.active) {
        return;
    }
    if (current_val_acc < client.best_val_acc - 1e-12) {
        ++client.decline_streak;
    } else {
        client.decline_streak = 0;
        client.best_val_acc = std::max(client.best_val_acc, current_val_acc);
    }
    if (client.decline_streak >= patience) {
        client.active = false;
    }
}

// ---------------------------------------------------------------------------
// Server side
// ---------------------------------------------------------------------------

struct ServerAggregate {
    ModelParams global_params;
    std::vector<double> accuracies;    // aligned with the sorted updates
    std::vector<double> coefficients;  // aligned with the sorted updates
    bool fallback_to_samples = false;
};

/// Scores each update on the server's validation set and aggregates. Takes
/// only parameters and sample counts; iterates in client-id order.
inline ServerAggregate server_aggregate(const ServerState& server, std::vector<ClientUpdate>& updates, Aggregation rule)
{
    require(!updates.empty(), "server_aggregate: no client updates");
    std::sort(updates.begin(), updates.end(), [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
    ServerAggregate out;
    std::vector<ModelParams> params;
    std::vector<std::size_t> counts;
    for (const auto& u : updates) {
        params.push_back(u.params);
        counts.push_back(u.sample_count);
        out.accuracies.push_back(model::accuracy(u.params, server.validation.features, server.validation.pseudo_labels));
    }
    if (rule == Aggregation::samples) {
        out.coefficients = sample_coefficients(counts);
    } else if (std::all_of(out.accuracies.begin(), out.accuracies.end(), [](double a) { return a == 0.0; })) {
        out.coefficients = sample_coefficients(counts);
        out.fallback_to_samples = true;
    } else {
        out.coefficients = accuracy_coefficients(out.accuracies);
    }
    out.global_params = weighted_average(params, out.coefficients);
    return out;
}

/// One federated round: broadcast, local training, upload, server scoring and
/// aggregation, participation update.
inline RoundRecord run_round(ServerState& server, std::vector<ClientState>& clients, const FederationConfig& cfg)
{
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        if (clients[i].active) {
            active.push_back(i);
        }
    }
    require(!active.empty(), "run_round: no active clients");

    TrainConfig local = cfg.local;
    local.seed = derive_seed(cfg.local.seed, "federation/round", static_cast<std::uint64_t>(server.round_index));
    std::vector<ClientUpdate> updates(active.size());
    parallel_for(
        active.size(),
        [&](std::size_t slot) {
            ClientState& c = clients[active[slot]];
            c.params = model::train_sgd(server.global_params, c.active_data(), local);
            updates[slot] = {c.client_id, c.params, c.sample_count()};
        },
        cfg.threads);

    const auto agg = server_aggregate(server, updates, cfg.aggregation);
    server.global_params = agg.global_params;

    RoundRecord record;
    record.round = server.round_index;
    record.fallback_to_samples = agg.fallback_to_samples;
    for (std::size_t u = 0; u < updates.size(); ++u) {
        auto it = std::find_if(clients.begin(), clients.end(),
                               [&](const ClientState& c) { return c.client_id == updates[u].client_id; });
        if (cfg.patience > 0) {
            update_participation(*it, agg.accuracies[u], cfg.patience);
        }
        record.clients.push_back({updates[u].client_id, agg.accuracies[u], agg.coefficients[u], it->active});
    }
    record.global_validation_accuracy =
        model::accuracy(server.global_params, server.validation.features, server.validation.pseudo_labels);
    server.history.push_back(record);
    ++server.round_index;
    return record;
}

/// Runs cfg.rounds rounds. Once every client has dropped out the global model
/// is frozen and the remaining rounds are recorded as halted.
inline void run_federation(ServerState& server, std::vector<ClientState>& clients, const FederationConfig& cfg)
{
    require(!clients.empty(), "run_federation: no clients");
    for (int r = 0; r < cfg.rounds; ++r) {
        const bool any_active = std::any_of(clients.begin(), clients.end(), [](const auto& c) { return c.active; });
        if (any_active) {
            run_round(server, clients, cfg);
            continue;
        }
        RoundRecord frozen;
        frozen.round = server.round_index++;
        frozen.halted = true;
        frozen.global_validation_accuracy =
            model::accuracy(server.global_params, server.validation.features, server.validation.pseudo_labels);
        server.history.push_back(frozen);
    }
}

} // namespace otfed::federation
