#include "commands.hpp"

#include "mah/codes.hpp"
#include "mah/config.hpp"
#include "mah/data.hpp"
#include "mah/retrieval.hpp"
#include "mah/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

namespace mah::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    std::string out;
};

class Stopwatch {
public:
    double elapsed_ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Collects what a command read and wrote, then lands as manifest.json.
class Manifest {
public:
    explicit Manifest(std::string command) { doc_["command"] = std::move(command); }

    void input(const std::string& role, const std::string& path) {
        doc_["inputs"][role] = {{"path", path}, {"sha256", file_digest(path)}};
    }
    void output(const std::string& role, const fs::path& path) {
        doc_["outputs"][role] = {{"path", path.string()}, {"sha256", file_digest(path.string())}};
    }
    json& operator[](const std::string& key) { return doc_[key]; }

    void write(const fs::path& dir, const Stopwatch& clock) {
        doc_["tool_version"] = kToolVersion;
        doc_["timings"]["wall_ms"] = clock.elapsed_ms();
        std::ofstream out(dir / "manifest.json");
        out << doc_.dump(2) << '\n';
        if (!out) throw FormatError("cannot write manifest in '" + dir.string() + "'");
    }

private:
    json doc_;
};

fs::path require_out(const GlobalOptions& g) {
    if (g.out.empty()) throw ValidationError("--out is required");
    fs::path dir(g.out);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw FormatError("cannot write '" + path.string() + "'");
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

std::vector<Branch> branches_for(const std::string& name) {
    if (name == "all") return {kAllBranches.begin(), kAllBranches.end()};
    return {parse_branch(name)};
}

json metrics_json(Branch b, std::size_t code_length, const RetrievalMetrics& m, const std::vector<std::size_t>& ks) {
    json pk = json::object();
    for (auto k : ks) pk[std::to_string(k)] = m.precision_at_k.at(k);
    return {{"branch", std::string(branch_name(b))},
            {"code_length", code_length},
            {"map", m.map},
            {"precision_at_k", pk},
            {"n_queries", m.n_queries},
            {"n_skipped", m.n_skipped}};
}

std::string per_query_csv(const RetrievalMetrics& m, const std::vector<std::size_t>& ks) {
    std::ostringstream os;
    os.precision(12);
    os << "query_id,ap";
    for (auto k : ks) os << ",p@" << k;
    os << '\n';
    for (std::size_t q = 0; q < m.per_query.size(); ++q) {
        const auto& r = m.per_query[q];
        os << q << ',';
        if (r.average_precision) os << *r.average_precision;
        for (double p : r.precision_at_k) os << ',' << p;
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::size_t classes = 10;
    std::size_t per_class = 100;
    std::size_t dim = 16;
    double spread = 0.1;
    std::size_t queries_per_class = 0;
    std::string format = "binary";
};

int cmd_synth(const SynthArgs& a, const GlobalOptions& g) {
    Stopwatch clock;
    if (a.classes < 2) throw ValidationError("--classes must be >= 2");
    if (a.format != "binary" && a.format != "csv") throw ValidationError("--format must be binary or csv");
    SynthSpec spec{a.classes, a.per_class, a.dim, a.spread, g.seed.value_or(0)};
    const fs::path dir = require_out(g);
    const auto [features, labels] = synth_clusters(spec);
    const FeatureFormat format = a.format == "csv" ? FeatureFormat::csv : FeatureFormat::binary;
    const std::string ext = a.format == "csv" ? ".csv" : ".mahf";
    Manifest manifest("synth");
    manifest["config"] = {{"classes", a.classes},   {"per_class", a.per_class}, {"dim", a.dim},
                          {"spread", a.spread},     {"seed", spec.seed},        {"queries_per_class", a.queries_per_class},
                          {"format", a.format}};
    save_features(features, dir / ("features" + ext), format);
    save_labels(labels, dir / "labels.txt");
    manifest.output("features", dir / ("features" + ext));
    manifest.output("labels", dir / "labels.txt");
    if (a.queries_per_class > 0) {
        const auto [qf, ql] = synth_samples(spec, a.queries_per_class, 1);
        save_features(qf, dir / ("queries" + ext), format);
        save_labels(ql, dir / "query_labels.txt");
        manifest.output("queries", dir / ("queries" + ext));
        manifest.output("query_labels", dir / "query_labels.txt");
    }
    manifest.write(dir, clock);
    std::cout << "wrote " << features.rows() << "x" << features.cols() << " features to " << dir.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string features;
    std::string labels;
    std::string head;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<double> gamma;
    std::optional<std::size_t> rounds;
    std::optional<std::size_t> epochs;
};

ResolvedConfig resolve_train_config(const TrainArgs& a, const GlobalOptions& g) {
    json doc = a.config.empty() ? json::object() : read_json(a.config);
    json overrides = json::object();
    if (!a.head.empty()) overrides["head_variant"] = a.head;
    if (a.alpha) overrides["weights"]["alpha"] = *a.alpha;
    if (a.beta) overrides["weights"]["beta"] = *a.beta;
    if (a.gamma) overrides["weights"]["gamma"] = *a.gamma;
    if (a.rounds) overrides["k"] = *a.rounds;
    if (a.epochs) overrides["t"] = *a.epochs;
    if (g.seed) overrides["seed"] = *g.seed;
    return resolve_config(doc, overrides);
}

struct TrainOutputs {
    TrainedModel model;
    std::vector<std::string> metric_lines;
    std::vector<double> wall_ms;
};

TrainOutputs run_training(const TrainConfig& config, const FeatureMatrix& features, const LabelSet& labels) {
    TrainOutputs out;
    out.model = train(config, features, labels, [&](const EpochMetrics& m) {
        out.metric_lines.push_back(metrics_json_line(m, config));
        out.wall_ms.push_back(m.wall_ms);
    });
    return out;
}

void write_run(const fs::path& dir, const TrainOutputs& run, Manifest& manifest) {
    checkpoint_save(run.model, dir / "model.ckpt");
    manifest.output("checkpoint", dir / "model.ckpt");
    for (Branch b : kAllBranches) {
        if (!run.model.config.branch_active(b)) continue;
        const auto& codes = run.model.codes_for(b);
        const fs::path path = dir / ("codes_" + std::to_string(codes.cols()) + ".mahb");
        save_codes(codes, path);
        manifest.output("codes_" + std::string(branch_name(b)), path);
    }
    std::string metrics;
    std::string timings;
    for (std::size_t i = 0; i < run.metric_lines.size(); ++i) {
        metrics += run.metric_lines[i] + '\n';
        timings += json{{"index", i}, {"wall_ms", run.wall_ms[i]}}.dump() + '\n';
    }
    write_text(dir / "metrics.jsonl", metrics);
    write_text(dir / "timings.jsonl", timings);
    manifest.output("metrics", dir / "metrics.jsonl");
    manifest.output("timings", dir / "timings.jsonl");
}

int cmd_train(const TrainArgs& a, const GlobalOptions& g) {
    Stopwatch clock;
    const ResolvedConfig resolved = resolve_train_config(a, g);
    const FeatureMatrix features = load_features(a.features, format_for_path(a.features));
    const LabelSet labels = load_labels(a.labels);
    resolved.config.validate(features.rows());
    const fs::path dir = require_out(g);

    Manifest manifest("train");
    if (!a.config.empty()) manifest.input("config", a.config);
    manifest.input("features", a.features);
    manifest.input("labels", a.labels);
    manifest["config"] = config_to_json(resolved.config);
    manifest["config_sources"] = sources_to_json(resolved);
    manifest["head_variant"] = std::string(variant_name(resolved.config.head_variant));

    const TrainOutputs run = run_training(resolved.config, features, labels);
    write_run(dir, run, manifest);
    manifest.write(dir, clock);
    std::cout << "trained " << run.metric_lines.size() << " epochs; final total objective "
              << run.model.final_metrics.total << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct EncodeArgs {
    std::string checkpoint;
    std::string features;
    std::string branch = "all";
};

int cmd_encode(const EncodeArgs& a, const GlobalOptions& g) {
    Stopwatch clock;
    const TrainedModel model = checkpoint_load(a.checkpoint);
    const FeatureMatrix features = load_features(a.features, format_for_path(a.features));
    const fs::path dir = require_out(g);
    Manifest manifest("encode");
    manifest.input("checkpoint", a.checkpoint);
    manifest.input("features", a.features);
    for (Branch b : branches_for(a.branch)) {
        const BinaryCodes codes = encode_items(features.values(), model.params, b);
        const fs::path path = dir / ("query_codes_" + std::to_string(codes.cols()) + ".mahb");
        save_codes(codes, path);
        manifest.output("codes_" + std::string(branch_name(b)), path);
    }
    manifest.write(dir, clock);
    return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string queries;
    std::string query_labels;
    std::string db_labels;
    std::string codes;
    std::string branch = "all";
    std::vector<std::size_t> ks;
};

int cmd_eval(const EvalArgs& a, const GlobalOptions& g) {
    Stopwatch clock;
    const TrainedModel model = checkpoint_load(a.checkpoint);
    const FeatureMatrix queries = load_features(a.queries, format_for_path(a.queries));
    const LabelSet qlabels = load_labels(a.query_labels);
    const LabelSet dblabels = load_labels(a.db_labels);
    const auto branches = branches_for(a.branch);
    if (!a.codes.empty() && branches.size() != 1) {
        throw ValidationError("--codes needs a single --branch (minus, mid or plus)");
    }
    const fs::path dir = require_out(g);
    Manifest manifest("eval");
    manifest.input("checkpoint", a.checkpoint);
    manifest.input("queries", a.queries);
    manifest.input("query_labels", a.query_labels);
    manifest.input("db_labels", a.db_labels);
    if (!a.codes.empty()) manifest.input("codes", a.codes);

    std::mt19937_64 rng(g.seed.value_or(0));
    json results = json::array();
    for (Branch b : branches) {
        const std::size_t c = model.config.lengths[b];
        BinaryCodes database = a.codes.empty() ? model.codes_for(b) : load_codes(a.codes);
        if (database.cols() != c) {
            throw ValidationError("code length mismatch: code file has c=" + std::to_string(database.cols()) +
                                  " but branch " + std::string(branch_name(b)) + " has c=" + std::to_string(c));
        }
        if (database.rows() != dblabels.size()) {
            throw ValidationError("database codes have " + std::to_string(database.rows()) + " rows but " +
                                  std::to_string(dblabels.size()) + " labels");
        }
        const RetrievalMetrics m =
            mean_average_precision(queries, model.params, b, database, qlabels, dblabels, a.ks, g.threads);
        json entry = metrics_json(b, c, m, a.ks);

        const BinaryCodes random_db = BinaryCodes::rademacher(database.rows(), c, rng);
        const BinaryCodes random_q = BinaryCodes::rademacher(queries.rows(), c, rng);
        entry["random_code_map"] = evaluate_codes(random_q, random_db, qlabels, dblabels, {}, g.threads).map;
        results.push_back(entry);

        const fs::path csv = dir / ("per_query_" + std::string(branch_name(b)) + ".csv");
        write_text(csv, per_query_csv(m, a.ks));
        manifest.output("per_query_" + std::string(branch_name(b)), csv);
        std::ostringstream line;
        line << branch_name(b) << " (c=" << c << "): MAP " << std::fixed << std::setprecision(4) << m.map << '\n';
        std::cout << line.str();
    }
    write_text(dir / "metrics.json", (results.size() == 1 ? results.front() : results).dump(2) + '\n');
    manifest.output("metrics", dir / "metrics.json");
    manifest.write(dir, clock);
    return kOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
    std::string config;
    std::string features;
    std::string labels;
    std::string queries;
    std::string query_labels;
    std::string grid = "coeff";
    std::vector<std::size_t> lengths;  // stride grid: candidate c and c+ values
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<std::size_t> ks;
    std::size_t self_queries = 100;
};

struct AblationCell {
    TrainConfig config;
    std::string skip_reason;
    double map = 0.0;
    std::map<std::size_t, double> precision;
    std::string error;
};

// Enumerates the grid in row-major order. Stride cells keep c- from the base
// config and pair every c < c+ from `lengths`.
std::vector<AblationCell> ablation_cells(const AblateArgs& a, const TrainConfig& base) {
    std::vector<AblationCell> cells;
    if (a.grid == "stride") {
        if (a.lengths.empty()) throw ValidationError("stride grid needs --lengths");
        for (auto c : a.lengths) {
            for (auto cp : a.lengths) {
                if (c >= cp) continue;
                AblationCell cell{base, {}, 0.0, {}, {}};
                cell.config.lengths.c_mid = c;
                cell.config.lengths.c_plus = cp;
                if (base.lengths.c_minus >= c) {
                    cell.skip_reason = "c_minus >= c_mid";
                }
                cells.push_back(std::move(cell));
            }
        }
    } else if (a.grid == "coeff") {
        if (a.alphas.empty() || a.betas.empty()) throw ValidationError("coefficient grid needs --alphas and --betas");
        for (double alpha : a.alphas) {
            for (double beta : a.betas) {
                AblationCell cell{base, {}, 0.0, {}, {}};
                cell.config.weights.alpha = alpha;
                cell.config.weights.beta = beta;
                cells.push_back(std::move(cell));
            }
        }
    } else {
        throw ValidationError("--grid must be stride or coeff");
    }
    return cells;
}

int cmd_ablate(const AblateArgs& a, const GlobalOptions& g) {
    Stopwatch clock;
    json doc = a.config.empty() ? json::object() : read_json(a.config);
    json overrides = json::object();
    if (g.seed) overrides["seed"] = *g.seed;
    const ResolvedConfig resolved = resolve_config(doc, overrides);
    const FeatureMatrix features = load_features(a.features, format_for_path(a.features));
    const LabelSet labels = load_labels(a.labels);
    const fs::path dir = require_out(g);

    FeatureMatrix queries;
    LabelSet qlabels;
    if (!a.queries.empty()) {
        if (a.query_labels.empty()) throw ValidationError("--queries needs --query-labels");
        queries = load_features(a.queries, format_for_path(a.queries));
        qlabels = load_labels(a.query_labels);
    } else {
        const IndexList pick =
            sample_query_set(features.rows(), std::min(a.self_queries, features.rows()), resolved.config.seed + 1);
        queries = features.select_rows(pick);
        qlabels = labels.select(pick);
    }

    std::vector<AblationCell> cells = ablation_cells(a, resolved.config);
    std::mutex io;
    std::size_t next = 0;
    auto worker = [&]() {
        while (true) {
            std::size_t i;
            {
                std::lock_guard lock(io);
                if (next >= cells.size()) return;
                i = next++;
            }
            auto& cell = cells[i];
            if (!cell.skip_reason.empty()) continue;
            try {
                cell.config.validate(features.rows());
                const TrainOutputs run = run_training(cell.config, features, labels);
                const fs::path cell_dir = dir / "cells" / std::to_string(i);
                fs::create_directories(cell_dir);
                std::string lines;
                for (const auto& l : run.metric_lines) lines += l + '\n';
                write_text(cell_dir / "metrics.jsonl", lines);
                const RetrievalMetrics m = mean_average_precision(queries, run.model.params, Branch::minus,
                                                                  run.model.codes_for(Branch::minus), qlabels, labels,
                                                                  a.ks);
                cell.map = m.map;
                cell.precision = m.precision_at_k;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, g.threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t + 1 < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::ostringstream csv;
    csv.precision(10);
    csv << "c_minus,c_mid,c_plus,alpha,beta,map";
    for (auto k : a.ks) csv << ",p@" << k;
    csv << ",status\n";
    bool failed = false;
    for (const auto& cell : cells) {
        const auto& c = cell.config;
        csv << c.lengths.c_minus << ',' << c.lengths.c_mid << ',' << c.lengths.c_plus << ',' << c.weights.alpha << ','
            << c.weights.beta << ',';
        if (!cell.skip_reason.empty() || !cell.error.empty()) {
            for (std::size_t i = 0; i <= a.ks.size(); ++i) csv << (i ? "," : "");
            csv << ',' << (cell.skip_reason.empty() ? "error: " + cell.error : "skipped: " + cell.skip_reason) << '\n';
            failed = failed || !cell.error.empty();
            continue;
        }
        csv << cell.map;
        for (auto k : a.ks) csv << ',' << cell.precision.at(k);
        csv << ",ok\n";
    }
    write_text(dir / "grid.csv", csv.str());

    Manifest manifest("ablate");
    if (!a.config.empty()) manifest.input("config", a.config);
    manifest.input("features", a.features);
    manifest.input("labels", a.labels);
    manifest["config"] = config_to_json(resolved.config);
    manifest["config_sources"] = sources_to_json(resolved);
    manifest["grid"] = a.grid;
    manifest.output("grid", dir / "grid.csv");
    manifest.write(dir, clock);
    std::cout << "wrote " << cells.size() << " cells to " << (dir / "grid.csv").string() << '\n';
    return failed ? kRuntimeError : kOk;
}

}  // namespace

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "' for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"Multi-head asymmetric hashing: synthesize, train, encode, evaluate, ablate"};
    app.require_subcommand(1);
    GlobalOptions g;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed");
    app.add_option("--threads", g.threads, "worker threads for evaluation and ablation cells")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "output directory");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate a clustered synthetic dataset");
    s->add_option("--classes", synth.classes, "number of classes (>= 2)");
    s->add_option("--per-class", synth.per_class, "items per class");
    s->add_option("--dim", synth.dim, "feature dimension");
    s->add_option("--spread", synth.spread, "isotropic noise std");
    s->add_option("--queries-per-class", synth.queries_per_class, "also write held-out queries");
    s->add_option("--format", synth.format, "binary or csv");

    TrainArgs train_args;
    auto* t = app.add_subcommand("train", "train a model and solve database codes");
    t->add_option("--config", train_args.config, "JSON config");
    t->add_option("--features", train_args.features, "feature file (.mahf or .csv)")->required();
    t->add_option("--labels", train_args.labels, "label file")->required();
    t->add_option("--head", train_args.head, "flat or cascaded");
    t->add_option("--alpha", train_args.alpha, "weight of the short-code branch");
    t->add_option("--beta", train_args.beta, "weight of the anchor branch");
    t->add_option("--gamma", train_args.gamma, "quantization weight");
    t->add_option("--rounds", train_args.rounds, "query-set resamplings (k)");
    t->add_option("--epochs", train_args.epochs, "epochs per round (t)");

    EncodeArgs encode;
    auto* e = app.add_subcommand("encode", "encode items with a trained model");
    e->add_option("--checkpoint", encode.checkpoint)->required();
    e->add_option("--features", encode.features)->required();
    e->add_option("--branch", encode.branch, "minus, mid, plus or all");

    EvalArgs eval;
    auto* v = app.add_subcommand("eval", "MAP and precision@k under Hamming ranking");
    v->add_option("--checkpoint", eval.checkpoint)->required();
    v->add_option("--queries", eval.queries)->required();
    v->add_option("--query-labels", eval.query_labels)->required();
    v->add_option("--db-labels", eval.db_labels)->required();
    v->add_option("--codes", eval.codes, "database MAHB file (default: codes in the checkpoint)");
    v->add_option("--branch", eval.branch, "minus, mid, plus or all");
    v->add_option("--k", eval.ks, "precision cutoffs (repeatable)");

    AblateArgs ablate;
    auto* ab = app.add_subcommand("ablate", "train and evaluate a grid of settings");
    ab->add_option("--config", ablate.config, "base JSON config");
    ab->add_option("--features", ablate.features)->required();
    ab->add_option("--labels", ablate.labels)->required();
    ab->add_option("--queries", ablate.queries);
    ab->add_option("--query-labels", ablate.query_labels);
    ab->add_option("--grid", ablate.grid, "stride or coeff");
    ab->add_option("--lengths", ablate.lengths, "stride grid code lengths")->delimiter(',');
    ab->add_option("--alphas", ablate.alphas, "coefficient grid alphas")->delimiter(',');
    ab->add_option("--betas", ablate.betas, "coefficient grid betas")->delimiter(',');
    ab->add_option("--k", ablate.ks, "precision cutoffs (repeatable)");
    ab->add_option("--self-queries", ablate.self_queries, "database items used as queries when --queries is absent");

    for (auto* sub : {s, t, e, v, ab}) sub->fallthrough();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kValidationError;
    }
    if (seed_opt->count() > 0) g.seed = seed;

    try {
        if (*s) return cmd_synth(synth, g);
        if (*t) return cmd_train(train_args, g);
        if (*e) return cmd_encode(encode, g);
        if (*v) return cmd_eval(eval, g);
        if (*ab) return cmd_ablate(ablate, g);
    } catch (const ValidationError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kValidationError;
    } catch (const NumericError& err) {
        std::cerr << "numeric failure: " << err.what() << '\n';
        return kRuntimeError;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kRuntimeError;
    }
    return kValidationError;
}

}  // namespace mah::cli
