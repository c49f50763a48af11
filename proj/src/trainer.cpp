#include "mah/trainer.hpp"

#include "mah/config.hpp"
#include "mah/dcc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mah {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ValidationError("config field '" + field + "': " + what);
}

Matrix embeddings_of(const Matrix& head_out) { return head_out.array().tanh().matrix(); }

IndexList gather(const IndexList& source, const IndexList& positions) {
    IndexList out;
    out.reserve(positions.size());
    for (auto p : positions) out.push_back(source[p]);
    return out;
}

}  // namespace

void TrainConfig::validate(std::size_t n) const {
    try {
        lengths.validate();
    } catch (const ValidationError& e) {
        require(false, "lengths", e.what());
    }
    try {
        weights.validate();
    } catch (const ValidationError& e) {
        require(false, "weights", e.what());
    }
    require(n >= 1, "m", "dataset is empty");
    const std::size_t mm = resolved_m(n);
    require(mm >= 1 && mm <= n, "m", "must satisfy 1 <= m <= n (n=" + std::to_string(n) + ")");
    require(rounds >= 1, "k", "must be >= 1");
    require(batch_size >= 1 && batch_size <= mm, "batch_size", "must satisfy 1 <= batch_size <= m");
    require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate", "must be > 0");
    require(momentum >= 0.0 && momentum < 1.0, "momentum", "must be in [0, 1)");
    require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay", "must be >= 0");
    require(dcc_sweeps_per_epoch >= 1, "dcc_sweeps_per_epoch", "must be >= 1");
    require(!(single_head && head_variant == HeadVariant::cascaded), "single_head",
            "a single-head model has no cascade; use head_variant flat");
    if (!encoder.identity) {
        require(encoder.latent_dim >= 1, "encoder.latent_dim", "must be >= 1");
        for (auto h : encoder.hidden) require(h >= 1, "encoder.hidden", "widths must be >= 1");
    }
}

BranchArray<double> TrainConfig::loss_weights() const {
    if (single_head) return {1.0, 0.0, 0.0};
    return weights.branch_weights();
}

BranchArray<double> TrainConfig::head_weights() const {
    if (single_head) return {1.0, 0.0, 0.0};
    return head_update_weights(weights, head_weighting);
}

bool TrainedModel::operator==(const TrainedModel& other) const {
    return params == other.params && codes == other.codes &&
           config_to_json(config) == config_to_json(other.config);
}

TrainState init_state(const TrainConfig& config, const FeatureMatrix& features) {
    config.validate(features.rows());
    TrainState state;
    state.rng.seed(config.seed);
    NetworkSpec spec;
    spec.input_dim = features.cols();
    spec.encoder = config.encoder;
    spec.lengths = config.lengths;
    spec.variant = config.head_variant;
    spec.use_bias = config.use_bias;
    state.params = init_params(spec, state.rng());
    state.optimizer = make_optimizer(state.params, config.learning_rate, config.momentum, config.weight_decay);
    for (Branch b : kAllBranches) {
        state.codes[index_of(b)] = BinaryCodes::rademacher(features.rows(), config.lengths[b], state.rng);
    }
    return state;
}

void begin_round(TrainState& state, const TrainConfig& config, const LabelSet& labels) {
    const std::size_t n = labels.size();
    state.omega = sample_query_set(n, config.resolved_m(n), state.rng());
    state.similarity = build_similarity(labels.select(state.omega), labels);
}

EpochMetrics epoch_step(TrainState& state, const TrainConfig& config, const FeatureMatrix& features) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t m = state.omega.size();
    if (m == 0 || state.similarity.rows() != m) throw ValidationError("epoch_step called before begin_round");

    EpochMetrics metrics;
    metrics.round = state.round;
    metrics.epoch = state.epoch;

    const auto loss_w = config.loss_weights();
    const auto head_w = config.head_weights();
    const bool separate_head_grads = head_w != loss_w;
    const double gamma = config.weights.gamma;

    IndexList order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);

    std::size_t batch_no = 0;
    for (std::size_t begin = 0; begin < m; begin += config.batch_size, ++batch_no) {
        const IndexList positions(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(std::min(m, begin + config.batch_size)));
        const IndexList rows = gather(state.omega, positions);
        const Matrix batch = features.select_rows(rows).values();
        const SimilarityMatrix sim = state.similarity.select_rows(positions);

        const ForwardPass pass = forward(state.params, batch);
        for (Branch b : kAllBranches) {
            if (!config.branch_active(b)) continue;
            auto& acc = metrics.sgd_loss[index_of(b)];
            const auto& codes = state.codes[index_of(b)];
            const double ls = semantic_loss(pass.heads[b], codes, sim, config.lengths[b]);
            const double lq = quantization_loss(pass.heads[b], codes.select_rows(rows));
            if (!std::isfinite(ls) || !std::isfinite(lq)) {
                std::ostringstream os;
                os << "non-finite loss in round " << state.round << ", epoch " << state.epoch << ", batch " << batch_no
                   << " (branch " << branch_name(b) << ")";
                throw NumericError(os.str());
            }
            acc.semantic += ls;
            acc.quantization += lq;
            acc.combined += ls + gamma * lq;
        }

        const HeadOutputs out_grads =
            weighted_embedding_grads(pass.heads, state.codes, sim, rows, loss_w, gamma, config.lengths);
        ParamGrads grads = backward(state.params, pass, out_grads);
        if (separate_head_grads) {
            const HeadOutputs head_grads =
                weighted_embedding_grads(pass.heads, state.codes, sim, rows, head_w, gamma, config.lengths);
            const ParamGrads routed = backward(state.params, pass, head_grads);
            grads.heads = routed.heads;
        }
        sgd_step(state.params, grads, state.optimizer);
    }

    // Discrete step with the network fixed: long codes first, short codes last.
    const ForwardPass all = forward(state.params, features.select_rows(state.omega).values());
    DccOptions options;
    options.sweeps = config.dcc_sweeps_per_epoch;
    options.check_monotone = config.check_dcc_monotone;
    for (Branch b : {Branch::plus, Branch::mid, Branch::minus}) {
        if (!config.branch_active(b)) continue;
        const Matrix u = embeddings_of(all.heads[b]);
        auto& codes = state.codes[index_of(b)];
        codes = solve_codes(std::move(codes), u, state.similarity, state.omega, gamma, options).codes;
        metrics.dcc_objective[index_of(b)] =
            objective_value(codes, u, state.similarity, state.omega, gamma, config.lengths[b]);
        metrics.total += loss_w[index_of(b)] * metrics.dcc_objective[index_of(b)];
    }
    if (!std::isfinite(metrics.total)) {
        throw NumericError("non-finite objective after DCC in round " + std::to_string(state.round) + ", epoch " +
                           std::to_string(state.epoch));
    }
    ++state.epoch;
    metrics.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return metrics;
}

TrainedModel train(const TrainConfig& config, const FeatureMatrix& features, const LabelSet& labels,
                   const EpochObserver& observer) {
    if (labels.size() != features.rows()) {
        throw ValidationError("feature rows (" + std::to_string(features.rows()) + ") and labels (" +
                              std::to_string(labels.size()) + ") disagree");
    }
    TrainState state = init_state(config, features);
    EpochMetrics last;
    for (std::size_t r = 0; r < config.rounds; ++r) {
        state.round = r;
        state.epoch = 0;
        begin_round(state, config, labels);
        for (std::size_t t = 0; t < config.epochs; ++t) {
            last = epoch_step(state, config, features);
            if (observer) observer(last);
        }
    }
    return TrainedModel{std::move(state.params), std::move(state.codes), config, last};
}

std::string metrics_json_line(const EpochMetrics& metrics, const TrainConfig& config) {
    nlohmann::json line;
    line["round"] = metrics.round;
    line["epoch"] = metrics.epoch;
    nlohmann::json branches = nlohmann::json::object();
    nlohmann::json dcc = nlohmann::json::object();
    for (Branch b : kAllBranches) {
        if (!config.branch_active(b)) continue;
        const auto& l = metrics.sgd_loss[index_of(b)];
        const std::string name(branch_name(b));
        branches[name] = {{"code_length", config.lengths[b]},
                          {"L_s", l.semantic},
                          {"L_q", l.quantization},
                          {"total", l.combined}};
        dcc[name] = metrics.dcc_objective[index_of(b)];
    }
    line["branches"] = std::move(branches);
    line["dcc_objective"] = std::move(dcc);
    line["total"] = metrics.total;
    return line.dump();
}

}  // namespace mah
