#include "mah/config.hpp"
#include "mah/dcc.hpp"
#include "mah/retrieval.hpp"
#include "mah/trainer.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace mah;

namespace {

struct Dataset {
    FeatureMatrix x;
    LabelSet y;
};

Dataset small_data(std::uint64_t seed, std::size_t per_class = 20) {
    SynthSpec spec;
    spec.per_class = per_class;
    spec.dim = 8;
    spec.seed = seed;
    auto [x, y] = synth_clusters(spec);
    return {std::move(x), std::move(y)};
}

TrainConfig small_config(std::uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    c.encoder.hidden = {16};
    c.encoder.latent_dim = 12;
    c.rounds = 1;
    c.epochs = 4;
    c.batch_size = 32;
    c.learning_rate = 5e-6;
    c.weights.gamma = 1000.0;
    c.check_dcc_monotone = true;
    return c;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("mah_trainer_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("config validation names the offending field") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate(2000));
    auto fails_with = [](TrainConfig bad, std::size_t n, const std::string& field) {
        try {
            bad.validate(n);
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("'" + field + "'") != std::string::npos);
            return;
        }
        FAIL("expected a ValidationError for " << field);
    };
    TrainConfig bad = c;
    bad.m = 50;
    fails_with(bad, 40, "m");
    bad = c;
    bad.batch_size = 2000;
    fails_with(bad, 1500, "batch_size");
    bad = c;
    bad.rounds = 0;
    fails_with(bad, 2000, "k");
    bad = c;
    bad.learning_rate = 0.0;
    fails_with(bad, 2000, "learning_rate");
    bad = c;
    bad.lengths = {8, 8, 16};
    fails_with(bad, 2000, "lengths");
    bad = c;
    bad.weights.gamma = -1.0;
    fails_with(bad, 2000, "weights");
    bad = c;
    bad.single_head = true;
    bad.head_variant = HeadVariant::cascaded;
    fails_with(bad, 2000, "single_head");
    CHECK(c.resolved_m(5000) == 1000);
    CHECK(c.resolved_m(300) == 300);
}

TEST_CASE("config resolution") {
    SUBCASE("missing fields take defaults and are marked") {
        const ResolvedConfig r = resolve_config(nlohmann::json::parse(R"({"lengths": {"c_minus": 2}})"));
        CHECK(r.config.lengths.c_minus == 2);
        CHECK(r.config.lengths.c_mid == 8);
        CHECK(r.config.weights.gamma == 200.0);
        CHECK(r.config.batch_size == 64);
        CHECK(r.config.learning_rate == 1e-3);
        CHECK(r.sources.at("/lengths/c_minus") == ValueSource::config);
        CHECK(r.sources.at("/weights/gamma") == ValueSource::default_value);
        CHECK(sources_to_json(r).at("/weights/gamma") == "default");
    }
    SUBCASE("overrides win and are marked as flags") {
        const ResolvedConfig r = resolve_config(nlohmann::json::parse(R"({"weights": {"alpha": 1}})"),
                                                nlohmann::json::parse(R"({"weights": {"alpha": 3}})"));
        CHECK(r.config.weights.alpha == 3.0);
        CHECK(r.sources.at("/weights/alpha") == ValueSource::flag);
    }
    SUBCASE("unknown fields and wrong types name the field") {
        CHECK_THROWS_WITH_AS(resolve_config(nlohmann::json::parse(R"({"weights": {"delta": 1}})")),
                             doctest::Contains("/weights/delta"), ValidationError);
        CHECK_THROWS_WITH_AS(resolve_config(nlohmann::json::parse(R"({"k": "three"})")), doctest::Contains("/k"),
                             ValidationError);
        CHECK_THROWS_WITH_AS(resolve_config(nlohmann::json::parse(R"({"head_variant": "tree"})")),
                             doctest::Contains("/head_variant"), ValidationError);
    }
    SUBCASE("JSON form round trips") {
        TrainConfig c = small_config(9);
        c.head_variant = HeadVariant::cascaded;
        c.head_weighting = HeadWeighting::swapped;
        const ResolvedConfig r = resolve_config(config_to_json(c));
        CHECK(config_to_json(r.config) == config_to_json(c));
    }
}

TEST_CASE("no-op training keeps the seeded initialisation") {
    const Dataset d = small_data(1);
    TrainConfig c = small_config(3);
    c.epochs = 0;
    const TrainState init = init_state(c, d.x);
    const TrainedModel m = train(c, d.x, d.y);
    CHECK(m.params == init.params);
    for (Branch b : kAllBranches) CHECK(m.codes_for(b) == init.codes[index_of(b)]);

    // The initial codes are a seeded Rademacher draw: balanced and distinct per seed.
    const auto& minus = init.codes[index_of(Branch::minus)].values();
    CHECK(std::abs(minus.mean()) < 0.2);
    CHECK_FALSE(init_state(small_config(4), d.x).codes[0] == init.codes[0]);
}

TEST_CASE("trained model shapes") {
    const Dataset d = small_data(2);
    TrainConfig c = small_config(5);
    c.rounds = 2;
    c.epochs = 1;
    c.m = 100;
    c.head_variant = HeadVariant::cascaded;
    std::vector<IndexList> omegas;
    TrainState state = init_state(c, d.x);
    for (std::size_t r = 0; r < c.rounds; ++r) {
        begin_round(state, c, d.y);
        omegas.push_back(state.omega);
        CHECK(state.similarity.rows() == 100);
        CHECK(state.similarity.cols() == d.x.rows());
        epoch_step(state, c, d.x);
        for (Branch b : kAllBranches) {
            CHECK(state.codes[index_of(b)].rows() == d.x.rows());
            CHECK(state.codes[index_of(b)].cols() == c.lengths[b]);
        }
    }
    CHECK(omegas[0] != omegas[1]);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const Dataset d = small_data(3);
    const TrainConfig c = small_config(11);
    std::vector<std::string> log_a, log_b;
    const TrainedModel a = train(c, d.x, d.y, [&](const EpochMetrics& e) { log_a.push_back(metrics_json_line(e, c)); });
    const TrainedModel b = train(c, d.x, d.y, [&](const EpochMetrics& e) { log_b.push_back(metrics_json_line(e, c)); });
    CHECK(a == b);
    CHECK(encode_checkpoint(a) == encode_checkpoint(b));
    CHECK(log_a == log_b);
    CHECK(log_a.size() == c.epochs);

    TrainConfig other = c;
    other.seed = 12;
    CHECK_FALSE(train(other, d.x, d.y) == a);
}

TEST_CASE("zero learning rate freezes the network while DCC still updates codes") {
    const Dataset d = small_data(4);
    const TrainConfig c = small_config(6);
    TrainState state = init_state(c, d.x);
    state.optimizer.learning_rate = 0.0;
    const ModelParams before = state.params;
    const auto codes_before = state.codes;
    begin_round(state, c, d.y);
    epoch_step(state, c, d.x);
    CHECK(state.params == before);
    for (Branch b : kAllBranches) CHECK_FALSE(state.codes[index_of(b)] == codes_before[index_of(b)]);
}

TEST_CASE("codes at a DCC fixed point with a frozen network keep the total loss stable") {
    const Dataset d = small_data(5);
    TrainConfig c = small_config(7);
    c.dcc_sweeps_per_epoch = 100;
    TrainState state = init_state(c, d.x);
    state.optimizer.learning_rate = 0.0;
    begin_round(state, c, d.y);
    epoch_step(state, c, d.x);
    const EpochMetrics a = epoch_step(state, c, d.x);
    const EpochMetrics b = epoch_step(state, c, d.x);
    CHECK(std::abs(a.total - b.total) <= 1e-9 * std::max(1.0, std::abs(a.total)));
    for (Branch br : kAllBranches) {
        CHECK(std::abs(a.sgd_loss[index_of(br)].combined - b.sgd_loss[index_of(br)].combined) <=
              1e-9 * std::max(1.0, a.sgd_loss[index_of(br)].combined));
    }
}

TEST_CASE("DCC runs after every SGD step of the epoch, using the final network") {
    const Dataset d = small_data(6);
    for (auto variant : {HeadVariant::flat, HeadVariant::cascaded}) {
        TrainConfig c = small_config(8);
        c.head_variant = variant;
        TrainState state = init_state(c, d.x);
        begin_round(state, c, d.y);
        const auto codes_before = state.codes;
        epoch_step(state, c, d.x);
        const ForwardPass pass = forward(state.params, d.x.select_rows(state.omega).values());
        for (Branch b : kAllBranches) {
            const Matrix u = pass.heads[b].array().tanh().matrix();
            const DccResult expected =
                solve_codes(codes_before[index_of(b)], u, state.similarity, state.omega, c.weights.gamma);
            CHECK(state.codes[index_of(b)] == expected.codes);
        }
    }
}

TEST_CASE("single-head runs leave the other branches untouched") {
    const Dataset d = small_data(7);
    TrainConfig c = small_config(9);
    c.single_head = true;
    const TrainState init = init_state(c, d.x);
    const TrainedModel m = train(c, d.x, d.y);
    CHECK(m.codes_for(Branch::mid) == init.codes[index_of(Branch::mid)]);
    CHECK(m.codes_for(Branch::plus) == init.codes[index_of(Branch::plus)]);
    CHECK_FALSE(m.codes_for(Branch::minus) == init.codes[index_of(Branch::minus)]);
    const auto line = nlohmann::json::parse(metrics_json_line(m.final_metrics, c));
    CHECK(line.at("branches").size() == 1);
}

TEST_CASE("a diverging run reports a numeric error") {
    const Dataset d = small_data(8);
    TrainConfig c = small_config(10);
    c.learning_rate = 1e300;
    CHECK_THROWS_AS(train(c, d.x, d.y), NumericError);
}

TEST_CASE("checkpoints") {
    const Dataset d = small_data(9);
    TrainConfig c = small_config(13);
    c.epochs = 1;
    c.head_variant = HeadVariant::cascaded;
    const TrainedModel m = train(c, d.x, d.y);
    const auto dir = temp_dir("ckpt");
    const auto path = dir / "model.ckpt";
    checkpoint_save(m, path);

    SUBCASE("save then load is bit-identical") {
        const TrainedModel back = checkpoint_load(path);
        CHECK(back == m);
        CHECK(encode_checkpoint(back) == encode_checkpoint(m));
        CHECK(back.params.variant == HeadVariant::cascaded);
    }
    SUBCASE("truncated file fails the checksum") {
        std::string bytes = encode_checkpoint(m);
        bytes.resize(bytes.size() - 7);
        CHECK_THROWS_WITH_AS(decode_checkpoint(bytes), doctest::Contains("checksum"), FormatError);
    }
    SUBCASE("flipped payload byte fails the checksum") {
        std::string bytes = encode_checkpoint(m);
        bytes[bytes.size() / 2] ^= 0x40;
        CHECK_THROWS_WITH_AS(decode_checkpoint(bytes), doctest::Contains("checksum"), FormatError);
    }
    SUBCASE("unknown version byte is named") {
        std::string bytes = encode_checkpoint(m);
        bytes[4] = 7;
        CHECK_THROWS_WITH_AS(decode_checkpoint(bytes), doctest::Contains("version 7"), FormatError);
    }
    SUBCASE("wrong magic") {
        CHECK_THROWS_AS(decode_checkpoint("MAHB\x01"), FormatError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("learning behaviour on separable clusters") {
    // Five seeds, one round of fifteen epochs each.
    constexpr int kSeeds = 5;
    std::vector<double> mean_total(15, 0.0);
    double agreement = 0.0;
    for (int s = 0; s < kSeeds; ++s) {
        const Dataset d = small_data(100 + s, 30);
        TrainConfig c = small_config(200 + s);
        c.epochs = 15;
        std::size_t e = 0;
        const TrainedModel m = train(c, d.x, d.y, [&](const EpochMetrics& em) { mean_total[e++] += em.total / kSeeds; });

        // Out-of-sample encoding of database items reproduces their learned short codes.
        const BinaryCodes encoded = encode_items(d.x.values(), m.params, Branch::minus);
        const Matrix& learned = m.codes_for(Branch::minus).values();
        agreement += (encoded.values().array() == learned.array()).cast<double>().mean() / kSeeds;
    }
    int non_increasing = 0, counted = 0;
    for (std::size_t e = 4; e < mean_total.size(); ++e, ++counted) {
        if (mean_total[e] <= mean_total[e - 1]) ++non_increasing;
    }
    CHECK(non_increasing >= 0.8 * counted);
    CHECK(agreement >= 0.9);
}
