#pragma once

#include "mah/codes.hpp"
#include "mah/common.hpp"
#include "mah/data.hpp"
#include "mah/net.hpp"
#include "mah/objective.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>

namespace mah {

struct TrainConfig {
    CodeLengthGroup lengths;
    LossWeights weights;
    HeadVariant head_variant = HeadVariant::flat;
    std::size_t m = 0;  // training queries per round; 0 means min(1000, n)
    std::size_t rounds = 3;   // K: query-set resamplings
    std::size_t epochs = 15;  // T: epochs per round
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t dcc_sweeps_per_epoch = 1;
    std::uint64_t seed = 0;
    EncoderSpec encoder;
    bool use_bias = true;
    HeadWeighting head_weighting = HeadWeighting::loss;
    // Train only the short-code branch, as a plain single-length model.
    bool single_head = false;
    // Assert after every DCC column update that the code objective did not grow.
    bool check_dcc_monotone = false;

    std::size_t resolved_m(std::size_t n) const { return m == 0 ? std::min<std::size_t>(1000, n) : m; }
    // Throws ValidationError naming the offending field.
    void validate(std::size_t n) const;

    // Multipliers of each branch in the loss driving the encoder.
    BranchArray<double> loss_weights() const;
    // Multipliers of each branch's gradient in its own head's update.
    BranchArray<double> head_weights() const;
    bool branch_active(Branch b) const { return !single_head || b == Branch::minus; }
};

struct EpochMetrics {
    std::size_t round = 0;
    std::size_t epoch = 0;
    // Losses summed over the epoch's minibatches, before each batch's update.
    BranchArray<BranchLoss> sgd_loss{};
    // Code subproblem objective of each branch after the epoch's DCC updates.
    BranchArray<double> dcc_objective{};
    // Weighted sum of dcc_objective over the active branches.
    double total = 0.0;
    double wall_ms = 0.0;
};

struct TrainedModel {
    ModelParams params;
    BranchArray<BinaryCodes> codes;
    TrainConfig config;
    EpochMetrics final_metrics;

    const BinaryCodes& codes_for(Branch b) const { return codes[index_of(b)]; }
    bool operator==(const TrainedModel& other) const;
};

// Mutable training state threaded through the rounds and epochs.
struct TrainState {
    ModelParams params;
    OptimizerState optimizer;
    BranchArray<BinaryCodes> codes;
    std::mt19937_64 rng;
    IndexList omega;              // sampled database rows of the current round
    SimilarityMatrix similarity;  // m x n slice for omega
    std::size_t round = 0;
    std::size_t epoch = 0;
};

TrainState init_state(const TrainConfig& config, const FeatureMatrix& features);

// Resamples omega and rebuilds the similarity slice.
void begin_round(TrainState& state, const TrainConfig& config, const LabelSet& labels);

// One epoch: every minibatch of omega gets forward, loss, backward and an SGD
// step; then codes are updated by DCC for plus, mid and minus in that order.
EpochMetrics epoch_step(TrainState& state, const TrainConfig& config, const FeatureMatrix& features);

using EpochObserver = std::function<void(const EpochMetrics&)>;

TrainedModel train(const TrainConfig& config, const FeatureMatrix& features, const LabelSet& labels,
                   const EpochObserver& observer = {});

// Metrics log line (no timing, so logs of identical runs are identical).
std::string metrics_json_line(const EpochMetrics& metrics, const TrainConfig& config);

// Versioned binary container: config echo, every parameter tensor and the
// three code matrices, guarded by a CRC-32 of the payload.
inline constexpr std::uint8_t kCheckpointVersion = 1;
std::string encode_checkpoint(const TrainedModel& model);
TrainedModel decode_checkpoint(std::string_view bytes);
void checkpoint_save(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel checkpoint_load(const std::filesystem::path& path);

}  // namespace mah
