#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dvs/corpus.hpp"
#include "dvs/graphs.hpp"
#include "dvs/model.hpp"

using nlohmann::json;

namespace {

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write file: " + path);
    out << content;
    if (!out) throw InputError("write failure: " + path);
}

/// Chunked per-sample parallelism for pure work items.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t w = 0; w < std::min(jobs, n); ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < n; i = next++) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

dvs::TrainConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    try {
        return dvs::TrainConfig::from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw InputError("config " + path + ": " + e.what());
    }
}

std::string loss_csv(const std::vector<dvs::EpochStats>& history) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,train_loss,validation_loss,validation_accuracy\n";
    for (const dvs::EpochStats& e : history)
        os << e.epoch << ',' << e.train_loss << ',' << e.validation_loss << ','
           << e.validation_accuracy << '\n';
    return os.str();
}

struct LoadedModel {
    dvs::ModelParams params;
    dvs::TrainConfig config;
    dvs::AdamState adam{1, 0.0};
    dvs::Vocabulary vocab;
    dvs::EmbeddingProvider provider;
};

LoadedModel load_model(const std::string& path, const std::optional<std::string>& embeddings) {
    LoadedModel m;
    dvs::Checkpoint ck = dvs::load_checkpoint(path);
    dvs::unpack_checkpoint(ck, m.params, m.config, m.adam, m.vocab);
    if (embeddings) {
        m.provider = dvs::make_precomputed_provider(*embeddings);
        m.config.grsa.d_emb = m.provider.d;
    } else {
        if (m.params.embedding.rows() == 0)
            throw InputError("model was trained with precomputed embeddings; pass --embeddings");
        m.provider.kind = dvs::ProviderKind::TrainableTable;
        m.provider.d = m.config.grsa.d_emb;
    }
    return m;
}

std::vector<dvs::SampleInputs> preprocess_all(const std::vector<dvs::RawSample>& samples,
                                              const LoadedModel& m, std::size_t jobs) {
    dvs::EmbeddingProvider provider = m.provider;
    provider.vocab = &m.vocab;
    provider.table = &m.params.embedding;
    std::vector<dvs::SampleInputs> inputs(samples.size());
    parallel_for(samples.size(), jobs,
                 [&](std::size_t i) { inputs[i] = dvs::preprocess(samples[i], provider, m.config); });
    return inputs;
}

// ---- subcommands -------------------------------------------------------

int cmd_tokenize(const std::string& source_path, std::size_t l_max) {
    dvs::TokenStream ts = dvs::tokenize(read_file(source_path));
    if (l_max > 0) ts = dvs::truncate(std::move(ts), l_max);
    json arr = json::array();
    for (const dvs::Token& t : ts.tokens)
        arr.push_back({{"text", t.text},
                       {"kind", dvs::token_kind_name(t.kind)},
                       {"span", {t.byte_start, t.byte_end}}});
    std::cout << arr.dump(2) << "\n";
    return 0;
}

int cmd_extract(const std::string& source_path, const std::string& corpus_path,
                const std::string& out, std::size_t jobs) {
    if (source_path.empty() == corpus_path.empty())
        throw InputError("extract needs exactly one of --source or --corpus");
    if (!source_path.empty()) {
        const std::string text = dvs::export_bundle(dvs::extract_bundle(read_file(source_path)));
        if (out.empty()) std::cout << text << "\n";
        else write_file(out, text);
        return 0;
    }
    if (out.empty()) throw InputError("extract --corpus requires --out <directory>");
    auto samples = dvs::load_corpus(corpus_path);
    std::filesystem::create_directories(out);
    parallel_for(samples.size(), jobs, [&](std::size_t i) {
        const std::string text = dvs::export_bundle(dvs::extract_bundle(samples[i].source));
        write_file((std::filesystem::path(out) / (samples[i].id + ".json")).string(), text);
    });
    std::cerr << "extracted " << samples.size() << " bundles into " << out << "\n";
    return 0;
}

int cmd_train(const std::string& corpus_path, const std::string& config_path,
              std::uint64_t split_seed, std::optional<std::uint64_t> seed,
              const std::optional<std::string>& embeddings, const std::string& out,
              const std::string& csv_path, const std::string& cache_dir, bool no_cache) {
    auto samples = dvs::load_corpus(corpus_path);
    dvs::TrainConfig config = load_config(config_path);
    if (seed) config.seed = *seed;
    dvs::CorpusSplit split = dvs::split_corpus(samples, config.ratios, split_seed, config.stratify);

    dvs::TrainResult result =
        dvs::train(samples, split, config, embeddings, cache_dir, !no_cache && !cache_dir.empty());
    dvs::save_checkpoint(result.best, out);
    write_file(csv_path.empty() ? out + ".loss.csv" : csv_path, loss_csv(result.history));

    // held-out metrics from the best checkpoint
    LoadedModel m;
    dvs::unpack_checkpoint(result.best, m.params, m.config, m.adam, m.vocab);
    m.vocab = result.vocab;
    m.provider.kind =
        embeddings ? dvs::ProviderKind::PrecomputedFile : dvs::ProviderKind::TrainableTable;
    if (embeddings) m.provider = dvs::make_precomputed_provider(*embeddings);
    m.provider.d = m.config.grsa.d_emb;

    std::vector<dvs::RawSample> test_samples;
    for (const std::string& id : split.test)
        for (const dvs::RawSample& s : samples)
            if (s.id == id) test_samples.push_back(s);

    json report;
    report["epochs"] = result.history.size();
    report["final_train_loss"] = result.history.empty() ? 0.0 : result.history.back().train_loss;
    report["checkpoint"] = out;
    if (!test_samples.empty()) {
        auto inputs = preprocess_all(test_samples, m, 1);
        dvs::Metrics metrics = dvs::evaluate(m.params, m.config, inputs);
        report["test"] = dvs::metrics_to_json(metrics);
        std::cerr << dvs::metrics_table(metrics);
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& corpus_path,
                 std::optional<std::uint64_t> split_seed,
                 const std::optional<std::string>& embeddings, std::size_t jobs) {
    LoadedModel m = load_model(model_path, embeddings);
    auto samples = dvs::load_corpus(corpus_path);
    if (split_seed) {
        // evaluate only the held-out test portion of the deterministic split
        dvs::CorpusSplit split =
            dvs::split_corpus(samples, m.config.ratios, *split_seed, m.config.stratify);
        std::vector<dvs::RawSample> test;
        for (const std::string& id : split.test)
            for (const dvs::RawSample& s : samples)
                if (s.id == id) test.push_back(s);
        samples = std::move(test);
    }
    if (samples.empty()) throw InputError("nothing to evaluate");
    auto inputs = preprocess_all(samples, m, jobs);

    // per-sample forward passes are independent; count afterwards
    std::vector<int> preds(inputs.size());
    parallel_for(inputs.size(), jobs, [&](std::size_t i) {
        preds[i] = dvs::forward(inputs[i], m.params, m.config) >= 0.5 ? 1 : 0;
    });
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (preds[i] == 1 && inputs[i].label == 1) ++tp;
        else if (preds[i] == 1) ++fp;
        else if (inputs[i].label == 0) ++tn;
        else ++fn;
    }
    dvs::Metrics metrics = dvs::metrics_from_counts(tp, fp, tn, fn);
    std::cout << dvs::metrics_to_json(metrics).dump(2) << "\n";
    std::cerr << dvs::metrics_table(metrics);
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& source_path,
                const std::optional<std::string>& embeddings, const std::string& id) {
    LoadedModel m = load_model(model_path, embeddings);
    dvs::RawSample sample{id.empty() ? source_path : id, read_file(source_path), 0};
    auto inputs = preprocess_all({sample}, m, 1);
    const double p = dvs::forward(inputs[0], m.params, m.config);
    std::cout << json{{"id", sample.id}, {"probability", p}, {"label", p >= 0.5 ? 1 : 0}}.dump(2)
              << "\n";
    return 0;
}

int cmd_ablate_suite(const std::string& corpus_path, const std::string& config_path,
                     std::uint64_t split_seed, std::optional<std::uint64_t> seed) {
    auto samples = dvs::load_corpus(corpus_path);
    dvs::TrainConfig config = load_config(config_path);
    if (seed) config.seed = *seed;
    dvs::CorpusSplit split = dvs::split_corpus(samples, config.ratios, split_seed, config.stratify);

    struct Variant {
        std::string name;
        dvs::TrainConfig config;
    };
    std::vector<Variant> variants = {{"full", config},
                                     {"w/o AST", dvs::ablate(config, dvs::Representation::AST)},
                                     {"w/o CFG", dvs::ablate(config, dvs::Representation::CFG)},
                                     {"w/o DFG", dvs::ablate(config, dvs::Representation::DFG)},
                                     {"w/o PLS", dvs::ablate(config, dvs::Representation::PLS)}};
    json rows = json::array();
    for (const Variant& v : variants) {
        std::cerr << "training variant: " << v.name << "\n";
        dvs::TrainResult r = dvs::train(samples, split, v.config);
        LoadedModel m;
        dvs::unpack_checkpoint(r.best, m.params, m.config, m.adam, m.vocab);
        m.provider.kind = dvs::ProviderKind::TrainableTable;
        m.provider.d = m.config.grsa.d_emb;
        std::vector<dvs::RawSample> test;
        for (const std::string& id : split.test)
            for (const dvs::RawSample& s : samples)
                if (s.id == id) test.push_back(s);
        json row = {{"variant", v.name},
                    {"final_train_loss", r.history.empty() ? 0.0 : r.history.back().train_loss}};
        if (!test.empty()) {
            auto inputs = preprocess_all(test, m, 1);
            row["test"] = dvs::metrics_to_json(dvs::evaluate(m.params, m.config, inputs));
        }
        rows.push_back(std::move(row));
    }
    std::cout << rows.dump(2) << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t trials, double tolerance) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    double worst = 0.0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        dvs::TrainConfig config;
        config.l_max = 4 + rng() % 5;
        config.grsa = dvs::GrsaConfig{2, 2, 4, 6, 4, config.l_max};
        config.conv_kernels = 2 + rng() % 3;
        config.conv_width = 1 + rng() % std::min<std::size_t>(3, config.l_max);
        config.hidden = 3 + rng() % 4;
        config.seed = rng();

        const std::size_t vocab_size = 5;
        dvs::ModelParams params = dvs::init_params(config, vocab_size);
        dvs::SampleInputs x;
        x.id = "g" + std::to_string(trial);
        x.label = static_cast<int>(rng() % 2);
        const std::size_t l = config.l_max;
        auto random_binary = [&] {
            dvs::Matrix m(l, l);
            for (double& v : m.raw()) v = rng() % 3 == 0 ? 1.0 : 0.0;
            return m;
        };
        x.s_ast = random_binary();
        x.s_cfg = random_binary();
        x.s_dfg = random_binary();
        x.emb.values = dvs::Matrix(l, config.grsa.d_emb);
        x.emb.pad_mask.assign(l, true);
        x.emb.token_rows.resize(l);
        for (std::size_t t = 0; t < l; ++t) x.emb.token_rows[t] = static_cast<int>(t % vocab_size);
        dvs::refresh_embedding(x, params.embedding);

        dvs::ModelGrads grads = dvs::zero_grads(params);
        dvs::batch_loss_and_grads({&x}, params, config, &grads);
        auto loss = [&](const std::vector<double>& flat) {
            dvs::ModelParams p2 = params;
            p2.unflatten(flat);
            dvs::SampleInputs x2 = x;
            dvs::refresh_embedding(x2, p2.embedding);
            return dvs::batch_loss_and_grads({&x2}, p2, config, nullptr);
        };
        worst = std::max(worst, dvs::grad_check(loss, params.flatten(), grads.flatten(), 1e-5));
    }
    std::cout << json{{"trials", trials}, {"max_relative_error", worst}, {"tolerance", tolerance}}
                     .dump(2)
              << "\n";
    if (worst >= tolerance) {
        std::cerr << "gradient check failed: " << worst << " >= " << tolerance << "\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DeepVulSeeker-style vulnerability identification pipeline"};
    app.require_subcommand(1);

    std::string source_path, corpus_path, config_path, model_path, out, csv_path, cache_dir, id;
    std::optional<std::string> embeddings;
    std::uint64_t split_seed = 0, gc_seed = 0;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1, l_max = 0, trials = 20;
    double tolerance = 1e-4;
    bool no_cache = false;

    auto* tok = app.add_subcommand("tokenize", "Lex a source file to a JSON token array");
    tok->add_option("--source", source_path, "source file")->required();
    tok->add_option("--l-max", l_max, "truncate to at most N tokens");

    auto* ext = app.add_subcommand("extract", "Build AST/CFG/DFG bundles");
    ext->add_option("--source", source_path, "single source file");
    ext->add_option("--corpus", corpus_path, "JSONL corpus");
    ext->add_option("--out", out, "output file (single) or directory (corpus)");
    ext->add_option("--jobs", jobs, "parallel workers");

    auto* tr = app.add_subcommand("train", "Train a model on a JSONL corpus");
    tr->add_option("--corpus", corpus_path, "JSONL corpus")->required();
    tr->add_option("--config", config_path, "training config JSON");
    tr->add_option("--split-seed", split_seed, "corpus split seed");
    tr->add_option("--seed", seed, "override the config's training seed");
    tr->add_option("--embeddings", embeddings, "precomputed .emb container");
    tr->add_option("--out", out, "checkpoint output path")->required();
    tr->add_option("--loss-csv", csv_path, "loss curve CSV path (default: <out>.loss.csv)");
    tr->add_option("--cache-dir", cache_dir, "preprocessing cache directory");
    tr->add_flag("--no-cache", no_cache, "bypass the preprocessing cache");

    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a corpus");
    ev->add_option("--model", model_path, "checkpoint path")->required();
    ev->add_option("--corpus", corpus_path, "JSONL corpus")->required();
    ev->add_option("--split-seed", seed, "evaluate only that split's test portion");
    ev->add_option("--embeddings", embeddings, "precomputed .emb container");
    ev->add_option("--jobs", jobs, "parallel workers");

    auto* pr = app.add_subcommand("predict", "Score one source file");
    pr->add_option("--model", model_path, "checkpoint path")->required();
    pr->add_option("--source", source_path, "source file")->required();
    pr->add_option("--embeddings", embeddings, "precomputed .emb container");
    pr->add_option("--id", id, "sample id for the report (default: file path)");

    auto* ab = app.add_subcommand("ablate-suite", "Train full + w/o AST/CFG/DFG/PLS variants");
    ab->add_option("--corpus", corpus_path, "JSONL corpus")->required();
    ab->add_option("--config", config_path, "training config JSON");
    ab->add_option("--split-seed", split_seed, "corpus split seed");
    ab->add_option("--seed", seed, "override the config's training seed");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
    gc->add_option("--seed", gc_seed, "RNG seed");
    gc->add_option("--trials", trials, "number of random instances");
    gc->add_option("--tolerance", tolerance, "max relative error allowed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (tok->parsed()) return cmd_tokenize(source_path, l_max);
        if (ext->parsed()) return cmd_extract(source_path, corpus_path, out, jobs);
        if (tr->parsed())
            return cmd_train(corpus_path, config_path, split_seed, seed, embeddings, out,
                             csv_path, cache_dir, no_cache);
        if (ev->parsed()) return cmd_evaluate(model_path, corpus_path, seed, embeddings, jobs);
        if (pr->parsed()) return cmd_predict(model_path, source_path, embeddings, id);
        if (ab->parsed()) return cmd_ablate_suite(corpus_path, config_path, split_seed, seed);
        if (gc->parsed()) return cmd_gradcheck(gc_seed, trials, tolerance);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const dvs::LexError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const dvs::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const dvs::CorpusError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const dvs::PlsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const dvs::ModelError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
