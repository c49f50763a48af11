#include "mah/config.hpp"

#include <functional>
#include <set>

namespace mah {

namespace {

using nlohmann::json;

struct Field {
    const char* pointer;
    std::function<void(const json&, TrainConfig&)> assign;
};

template <typename T>
T as(const json& v) {
    return v.get<T>();
}

std::size_t as_count(const json& v) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ValidationError("expected a non-negative integer");
    return v.get<std::size_t>();
}

double as_real(const json& v) {
    if (!v.is_number()) throw ValidationError("expected a number");
    return v.get<double>();
}

bool as_bool(const json& v) {
    if (!v.is_boolean()) throw ValidationError("expected true or false");
    return v.get<bool>();
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"/lengths/c_minus", [](const json& v, TrainConfig& c) { c.lengths.c_minus = as_count(v); }},
        {"/lengths/c_mid", [](const json& v, TrainConfig& c) { c.lengths.c_mid = as_count(v); }},
        {"/lengths/c_plus", [](const json& v, TrainConfig& c) { c.lengths.c_plus = as_count(v); }},
        {"/weights/alpha", [](const json& v, TrainConfig& c) { c.weights.alpha = as_real(v); }},
        {"/weights/beta", [](const json& v, TrainConfig& c) { c.weights.beta = as_real(v); }},
        {"/weights/gamma", [](const json& v, TrainConfig& c) { c.weights.gamma = as_real(v); }},
        {"/head_variant", [](const json& v, TrainConfig& c) { c.head_variant = parse_variant(as<std::string>(v)); }},
        {"/m", [](const json& v, TrainConfig& c) { c.m = as_count(v); }},
        {"/k", [](const json& v, TrainConfig& c) { c.rounds = as_count(v); }},
        {"/t", [](const json& v, TrainConfig& c) { c.epochs = as_count(v); }},
        {"/batch_size", [](const json& v, TrainConfig& c) { c.batch_size = as_count(v); }},
        {"/learning_rate", [](const json& v, TrainConfig& c) { c.learning_rate = as_real(v); }},
        {"/momentum", [](const json& v, TrainConfig& c) { c.momentum = as_real(v); }},
        {"/weight_decay", [](const json& v, TrainConfig& c) { c.weight_decay = as_real(v); }},
        {"/dcc_sweeps_per_epoch", [](const json& v, TrainConfig& c) { c.dcc_sweeps_per_epoch = as_count(v); }},
        {"/seed", [](const json& v, TrainConfig& c) { c.seed = as<std::uint64_t>(v); }},
        {"/encoder/hidden",
         [](const json& v, TrainConfig& c) {
             if (!v.is_array()) throw ValidationError("expected an array of widths");
             c.encoder.hidden.clear();
             for (const auto& w : v) c.encoder.hidden.push_back(as_count(w));
         }},
        {"/encoder/latent_dim", [](const json& v, TrainConfig& c) { c.encoder.latent_dim = as_count(v); }},
        {"/encoder/identity", [](const json& v, TrainConfig& c) { c.encoder.identity = as_bool(v); }},
        {"/encoder/bias", [](const json& v, TrainConfig& c) { c.use_bias = as_bool(v); }},
        {"/head_weighting",
         [](const json& v, TrainConfig& c) {
             const auto s = as<std::string>(v);
             if (s == "loss") {
                 c.head_weighting = HeadWeighting::loss;
             } else if (s == "swapped") {
                 c.head_weighting = HeadWeighting::swapped;
             } else {
                 throw ValidationError("expected \"loss\" or \"swapped\"");
             }
         }},
        {"/single_head", [](const json& v, TrainConfig& c) { c.single_head = as_bool(v); }},
        {"/check_dcc_monotone", [](const json& v, TrainConfig& c) { c.check_dcc_monotone = as_bool(v); }},
    };
    return table;
}

void reject_unknown(const json& doc, const std::string& prefix, const std::set<std::string>& known) {
    if (!doc.is_object()) throw ValidationError("config" + (prefix.empty() ? std::string() : " field '" + prefix + "'") +
                                                ": expected a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string path = prefix + "/" + it.key();
        if (known.count(path)) continue;
        bool is_group = false;
        for (const auto& k : known) is_group = is_group || k.rfind(path + "/", 0) == 0;
        if (!is_group) throw ValidationError("config field '" + path + "': unknown field");
        reject_unknown(it.value(), path, known);
    }
}

}  // namespace

nlohmann::json config_to_json(const TrainConfig& c) {
    json j;
    j["lengths"] = {{"c_minus", c.lengths.c_minus}, {"c_mid", c.lengths.c_mid}, {"c_plus", c.lengths.c_plus}};
    j["weights"] = {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"gamma", c.weights.gamma}};
    j["head_variant"] = std::string(variant_name(c.head_variant));
    j["m"] = c.m;
    j["k"] = c.rounds;
    j["t"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["momentum"] = c.momentum;
    j["weight_decay"] = c.weight_decay;
    j["dcc_sweeps_per_epoch"] = c.dcc_sweeps_per_epoch;
    j["seed"] = c.seed;
    j["encoder"] = {{"hidden", c.encoder.hidden},
                    {"latent_dim", c.encoder.latent_dim},
                    {"identity", c.encoder.identity},
                    {"bias", c.use_bias}};
    j["head_weighting"] = c.head_weighting == HeadWeighting::loss ? "loss" : "swapped";
    j["single_head"] = c.single_head;
    j["check_dcc_monotone"] = c.check_dcc_monotone;
    return j;
}

ResolvedConfig resolve_config(const nlohmann::json& doc, const nlohmann::json& overrides) {
    std::set<std::string> known;
    for (const auto& f : fields()) known.insert(f.pointer);
    reject_unknown(doc, "", known);
    reject_unknown(overrides, "", known);

    ResolvedConfig out;
    for (const auto& f : fields()) {
        const json::json_pointer ptr(f.pointer);
        const json* value = nullptr;
        ValueSource source = ValueSource::default_value;
        if (overrides.contains(ptr)) {
            value = &overrides.at(ptr);
            source = ValueSource::flag;
        } else if (doc.contains(ptr)) {
            value = &doc.at(ptr);
            source = ValueSource::config;
        }
        if (value) {
            try {
                f.assign(*value, out.config);
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError(std::string("config field '") + f.pointer + "': " + e.what());
            } catch (const ValidationError& e) {
                throw ValidationError(std::string("config field '") + f.pointer + "': " + e.what());
            }
        }
        out.sources[f.pointer] = source;
    }
    return out;
}

nlohmann::json sources_to_json(const ResolvedConfig& resolved) {
    json j = json::object();
    for (const auto& [ptr, src] : resolved.sources) {
        j[ptr] = src == ValueSource::config ? "config" : src == ValueSource::flag ? "flag" : "default";
    }
    return j;
}

}  // namespace mah
