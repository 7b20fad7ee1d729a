#include "dvs/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <unordered_map>

namespace dvs {

namespace {

using nlohmann::json;

std::uint64_t fnv1a_str(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<double> softmax2(const std::vector<double>& logits) {
    const double mx = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

const char* rep_name(Representation r) {
    switch (r) {
        case Representation::AST: return "AST";
        case Representation::CFG: return "CFG";
        case Representation::DFG: return "DFG";
        case Representation::PLS: return "PLS";
    }
    return "?";
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ModelError("batch_size must be >= 1");
    if (!(use_ast || use_cfg || use_dfg || use_pls))
        throw ModelError("at least one representation must be enabled");
    if (l_max < 1) throw ModelError("l_max must be >= 1");
    if (conv_width < 1 || conv_kernels < 1 || hidden < 1)
        throw ModelError("classifier head dimensions must be >= 1");
    grsa.validate();
}

json TrainConfig::to_json() const {
    return json{{"learning_rate", learning_rate},
                {"batch_size", batch_size},
                {"epochs", epochs},
                {"seed", seed},
                {"l_max", l_max},
                {"use_ast", use_ast},
                {"use_cfg", use_cfg},
                {"use_dfg", use_dfg},
                {"use_pls", use_pls},
                {"heads_pls", grsa.heads_pls},
                {"heads_graph", grsa.heads_graph},
                {"d_model", grsa.d_model},
                {"d_fuse", grsa.d_fuse},
                {"d_emb", grsa.d_emb},
                {"conv_kernels", conv_kernels},
                {"conv_width", conv_width},
                {"hidden", hidden},
                {"vocab_min_count", vocab_min_count},
                {"ratio_train", ratios.train},
                {"ratio_validation", ratios.validation},
                {"ratio_test", ratios.test},
                {"stratify", stratify}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.l_max = j.value("l_max", c.l_max);
    c.use_ast = j.value("use_ast", true);
    c.use_cfg = j.value("use_cfg", true);
    c.use_dfg = j.value("use_dfg", true);
    c.use_pls = j.value("use_pls", true);
    c.grsa.heads_pls = j.value("heads_pls", c.grsa.heads_pls);
    c.grsa.heads_graph = j.value("heads_graph", c.grsa.heads_graph);
    c.grsa.d_model = j.value("d_model", c.grsa.d_model);
    c.grsa.d_fuse = j.value("d_fuse", c.grsa.d_fuse);
    c.grsa.d_emb = j.value("d_emb", c.grsa.d_emb);
    c.conv_kernels = j.value("conv_kernels", c.conv_kernels);
    c.conv_width = j.value("conv_width", c.conv_width);
    c.hidden = j.value("hidden", c.hidden);
    c.vocab_min_count = j.value("vocab_min_count", c.vocab_min_count);
    c.ratios.train = j.value("ratio_train", c.ratios.train);
    c.ratios.validation = j.value("ratio_validation", c.ratios.validation);
    c.ratios.test = j.value("ratio_test", c.ratios.test);
    c.stratify = j.value("stratify", false);
    c.grsa.seq_len = c.l_max;
    return c;
}

TrainConfig ablate(TrainConfig config, Representation drop) {
    switch (drop) {
        case Representation::AST: config.use_ast = false; break;
        case Representation::CFG: config.use_cfg = false; break;
        case Representation::DFG: config.use_dfg = false; break;
        case Representation::PLS: config.use_pls = false; break;
    }
    if (!(config.use_ast || config.use_cfg || config.use_dfg || config.use_pls))
        throw ModelError(std::string("cannot drop ") + rep_name(drop) +
                         ": no representation would remain");
    return config;
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::groups() {
    return {{"grsa.w_in_ast", &grsa.w_in_ast}, {"grsa.w_in_cfg", &grsa.w_in_cfg},
            {"grsa.w_in_dfg", &grsa.w_in_dfg}, {"grsa.w_in_pls", &grsa.w_in_pls},
            {"grsa.w_out", &grsa.w_out},       {"conv.kernels", &conv_kernels},
            {"conv.bias", &conv_bias},         {"ffn.w1", &w1},
            {"ffn.b1", &b1},                   {"ffn.w2", &w2},
            {"ffn.b2", &b2},                   {"embedding", &embedding}};
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::groups() const {
    auto mut = const_cast<ModelParams*>(this)->groups();
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& [n, m] : mut) out.emplace_back(n, m);
    return out;
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> out;
    for (const auto& [name, m] : groups())
        out.insert(out.end(), m->raw().begin(), m->raw().end());
    return out;
}

void ModelParams::unflatten(const std::vector<double>& flat) {
    std::size_t p = 0;
    for (auto& [name, m] : groups()) {
        if (p + m->size() > flat.size()) throw ModelError("unflatten: vector too short");
        std::copy(flat.begin() + p, flat.begin() + p + m->size(), m->raw().begin());
        p += m->size();
    }
    if (p != flat.size()) throw ModelError("unflatten: vector length mismatch");
}

ModelParams init_params(const TrainConfig& config, std::size_t vocab_size) {
    config.validate();
    const std::size_t l = config.l_max;
    const GrsaConfig& g = config.grsa;
    std::mt19937_64 rng(config.seed);

    ModelParams p;
    p.grsa.w_in_ast = Matrix(l, g.d_model);
    p.grsa.w_in_cfg = Matrix(l, g.d_model);
    p.grsa.w_in_dfg = Matrix(l, g.d_model);
    p.grsa.w_in_pls = Matrix(g.d_emb, g.d_model);
    p.grsa.w_out = Matrix(4 * g.d_model, g.d_fuse);
    p.conv_kernels = Matrix(config.conv_kernels, config.conv_width * g.d_fuse);
    p.conv_bias = Matrix(1, config.conv_kernels);
    p.w1 = Matrix(config.conv_kernels, config.hidden);
    p.b1 = Matrix(1, config.hidden);
    p.w2 = Matrix(config.hidden, 2);
    p.b2 = Matrix(1, 2);
    p.embedding = Matrix(vocab_size, vocab_size ? g.d_emb : 0);

    glorot_init(p.grsa.w_in_ast, l, g.d_model, rng);
    glorot_init(p.grsa.w_in_cfg, l, g.d_model, rng);
    glorot_init(p.grsa.w_in_dfg, l, g.d_model, rng);
    glorot_init(p.grsa.w_in_pls, g.d_emb, g.d_model, rng);
    glorot_init(p.grsa.w_out, 4 * g.d_model, g.d_fuse, rng);
    glorot_init(p.conv_kernels, config.conv_width * g.d_fuse, config.conv_kernels, rng);
    glorot_init(p.w1, config.conv_kernels, config.hidden, rng);
    glorot_init(p.w2, config.hidden, 2, rng);
    if (vocab_size) glorot_init(p.embedding, vocab_size, g.d_emb, rng);
    return p;
}

SampleInputs inputs_from_bundle(const GraphBundle& bundle, const RawSample& sample,
                                const EmbeddingProvider& provider, const TrainConfig& config) {
    SampleInputs x;
    x.id = sample.id;
    x.label = sample.label;
    const std::size_t l = config.l_max;
    x.s_ast = node_adjacency_to_sequence_matrix(apply_metapath(bundle.ast), l);
    x.s_cfg = node_adjacency_to_sequence_matrix(apply_metapath(bundle.cfg), l);
    x.s_dfg = node_adjacency_to_sequence_matrix(apply_metapath(bundle.dfg), l);
    TokenStream ts = truncate(bundle.tokens, l);
    x.emb = embed(ts, provider, sample.id, l);
    return x;
}

SampleInputs preprocess(const RawSample& sample, const EmbeddingProvider& provider,
                        const TrainConfig& config) {
    return inputs_from_bundle(extract_bundle(sample.source), sample, provider, config);
}

void refresh_embedding(SampleInputs& x, const Matrix& table) {
    for (std::size_t t = 0; t < x.emb.token_rows.size(); ++t) {
        const int row = x.emb.token_rows[t];
        if (row < 0) continue;
        for (std::size_t c = 0; c < table.cols(); ++c)
            x.emb.values(t, c) = table(row, c);
    }
}

double forward(const SampleInputs& x, const ModelParams& params, const TrainConfig& config,
               ForwardCache* cache) {
    const std::size_t l = config.l_max;
    const Matrix zero_graph(l, l);
    const Matrix& s_ast = config.use_ast ? x.s_ast : zero_graph;
    const Matrix& s_cfg = config.use_cfg ? x.s_cfg : zero_graph;
    const Matrix& s_dfg = config.use_dfg ? x.s_dfg : zero_graph;

    EmbeddingMatrix emb = x.emb;
    if (!config.use_pls)
        std::fill(emb.values.raw().begin(), emb.values.raw().end(), 0.0);

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.emb_used = emb;

    c.fused = grsa_encode(s_ast, s_cfg, s_dfg, emb, params.grsa, config.grsa,
                          cache ? &c.grsa : nullptr);

    c.conv = conv1d(c.fused, params.conv_kernels, config.conv_width, 1);
    for (std::size_t p = 0; p < c.conv.rows(); ++p)
        for (std::size_t k = 0; k < c.conv.cols(); ++k) c.conv(p, k) += params.conv_bias(0, k);

    const std::size_t nk = config.conv_kernels;
    c.pooled.assign(nk, 0.0);
    c.argmax.assign(nk, 0);
    for (std::size_t k = 0; k < nk; ++k) {
        double best = c.conv(0, k);
        std::size_t arg = 0;
        for (std::size_t p = 1; p < c.conv.rows(); ++p)
            if (c.conv(p, k) > best) { best = c.conv(p, k); arg = p; }
        c.pooled[k] = best;
        c.argmax[k] = arg;
    }

    c.h1pre.assign(config.hidden, 0.0);
    for (std::size_t h = 0; h < config.hidden; ++h) {
        double acc = params.b1(0, h);
        for (std::size_t k = 0; k < nk; ++k) acc += c.pooled[k] * params.w1(k, h);
        c.h1pre[h] = acc;
    }
    c.h1.resize(config.hidden);
    for (std::size_t h = 0; h < config.hidden; ++h) c.h1[h] = std::max(0.0, c.h1pre[h]);

    c.logits.assign(2, 0.0);
    for (int o = 0; o < 2; ++o) {
        double acc = params.b2(0, o);
        for (std::size_t h = 0; h < config.hidden; ++h) acc += c.h1[h] * params.w2(h, o);
        c.logits[o] = acc;
    }
    c.probs = softmax2(c.logits);
    return c.probs[1];
}

double cross_entropy(const std::vector<double>& p, const std::vector<int>& y) {
    if (p.size() != y.size()) throw ModelError("cross_entropy: length mismatch");
    if (p.empty()) throw ModelError("cross_entropy: empty batch");
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = std::clamp(p[i], 1e-12, 1.0 - 1e-12);
        loss -= y[i] ? std::log(pi) : std::log(1.0 - pi);
    }
    return loss / static_cast<double>(p.size());
}

ModelGrads zero_grads(const ModelParams& params) {
    ModelGrads g;
    g.grsa = zero_grsa_grads(params.grsa);
    g.conv_kernels = Matrix(params.conv_kernels.rows(), params.conv_kernels.cols());
    g.conv_bias = Matrix(params.conv_bias.rows(), params.conv_bias.cols());
    g.w1 = Matrix(params.w1.rows(), params.w1.cols());
    g.b1 = Matrix(params.b1.rows(), params.b1.cols());
    g.w2 = Matrix(params.w2.rows(), params.w2.cols());
    g.b2 = Matrix(params.b2.rows(), params.b2.cols());
    g.embedding = Matrix(params.embedding.rows(), params.embedding.cols());
    return g;
}

std::vector<double> ModelGrads::flatten() const {
    std::vector<double> out;
    for (const Matrix* m : {&grsa.w_in_ast, &grsa.w_in_cfg, &grsa.w_in_dfg, &grsa.w_in_pls,
                            &grsa.w_out, &conv_kernels, &conv_bias, &w1, &b1, &w2, &b2,
                            &embedding})
        out.insert(out.end(), m->raw().begin(), m->raw().end());
    return out;
}

void backward(const ModelParams& params, const TrainConfig& config,
              const ForwardCache& c, int label, double scale, ModelGrads& grads) {
    const std::size_t nk = config.conv_kernels;
    const std::size_t hidden = config.hidden;

    // softmax + cross-entropy
    std::vector<double> dlogits = {c.probs[0] * scale, c.probs[1] * scale};
    dlogits[label ? 1 : 0] -= scale;

    std::vector<double> dh1(hidden, 0.0);
    for (int o = 0; o < 2; ++o) {
        grads.b2(0, o) += dlogits[o];
        for (std::size_t h = 0; h < hidden; ++h) {
            grads.w2(h, o) += c.h1[h] * dlogits[o];
            dh1[h] += params.w2(h, o) * dlogits[o];
        }
    }
    std::vector<double> dh1pre(hidden, 0.0);
    for (std::size_t h = 0; h < hidden; ++h) dh1pre[h] = c.h1pre[h] > 0.0 ? dh1[h] : 0.0;

    std::vector<double> dpooled(nk, 0.0);
    for (std::size_t h = 0; h < hidden; ++h) {
        grads.b1(0, h) += dh1pre[h];
        for (std::size_t k = 0; k < nk; ++k) {
            grads.w1(k, h) += c.pooled[k] * dh1pre[h];
            dpooled[k] += params.w1(k, h) * dh1pre[h];
        }
    }

    // max-pool routes gradient to the argmax position only
    const std::size_t d_fuse = config.grsa.d_fuse;
    Matrix dfused(c.fused.rows(), c.fused.cols());
    for (std::size_t k = 0; k < nk; ++k) {
        const double g = dpooled[k];
        grads.conv_bias(0, k) += g;
        const std::size_t base = c.argmax[k];
        for (std::size_t w = 0; w < config.conv_width; ++w)
            for (std::size_t col = 0; col < d_fuse; ++col) {
                grads.conv_kernels(k, w * d_fuse + col) += g * c.fused(base + w, col);
                dfused(base + w, col) += g * params.conv_kernels(k, w * d_fuse + col);
            }
    }

    Matrix demb = grsa_backward(c.grsa, params.grsa, config.grsa, c.emb_used.pad_mask,
                                dfused, grads.grsa);
    if (config.use_pls && grads.embedding.rows() > 0) {
        for (std::size_t t = 0; t < c.emb_used.token_rows.size(); ++t) {
            const int row = c.emb_used.token_rows[t];
            if (row < 0) continue;
            for (std::size_t col = 0; col < grads.embedding.cols(); ++col)
                grads.embedding(row, col) += demb(t, col);
        }
    }
}

double batch_loss_and_grads(const std::vector<const SampleInputs*>& batch,
                            const ModelParams& params, const TrainConfig& config,
                            ModelGrads* grads) {
    if (batch.empty()) throw ModelError("empty batch");
    std::vector<double> probs;
    std::vector<int> labels;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const SampleInputs* x : batch) {
        ForwardCache cache;
        probs.push_back(forward(*x, params, config, &cache));
        labels.push_back(x->label);
        if (grads) backward(params, config, cache, x->label, scale, *grads);
    }
    return cross_entropy(probs, labels);
}

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    Metrics m;
    m.tp = tp; m.fp = fp; m.tn = tn; m.fn = fn;
    const std::size_t total = tp + fp + tn + fn;
    if (total == 0) throw ModelError("metrics: empty sample set");
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
    if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    else m.precision_defined = false;
    if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    else m.recall_defined = false;
    if (m.precision_defined && m.recall_defined && m.precision + m.recall > 0.0)
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else m.f1_defined = false;
    return m;
}

json metrics_to_json(const Metrics& m) {
    return json{{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn},
                {"accuracy", m.accuracy},
                {"precision", m.precision}, {"precision_defined", m.precision_defined},
                {"recall", m.recall}, {"recall_defined", m.recall_defined},
                {"f1", m.f1}, {"f1_defined", m.f1_defined}};
}

std::string metrics_table(const Metrics& m) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "metric     value\n";
    os << "accuracy   " << m.accuracy << "\n";
    os << "precision  " << m.precision << (m.precision_defined ? "" : "  (undefined -> 0)") << "\n";
    os << "recall     " << m.recall << (m.recall_defined ? "" : "  (undefined -> 0)") << "\n";
    os << "f1         " << m.f1 << (m.f1_defined ? "" : "  (undefined -> 0)") << "\n";
    os << "confusion  tp=" << m.tp << " fp=" << m.fp << " tn=" << m.tn << " fn=" << m.fn << "\n";
    return os.str();
}

Metrics evaluate(const ModelParams& params, const TrainConfig& config,
                 const std::vector<SampleInputs>& samples) {
    if (samples.empty()) throw ModelError("evaluate: empty sample set");
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const SampleInputs& x : samples) {
        const double p = forward(x, params, config);
        const int pred = p >= 0.5 ? 1 : 0;
        if (pred == 1 && x.label == 1) ++tp;
        else if (pred == 1 && x.label == 0) ++fp;
        else if (pred == 0 && x.label == 0) ++tn;
        else ++fn;
    }
    return metrics_from_counts(tp, fp, tn, fn);
}

Checkpoint make_checkpoint(const ModelParams& params, const TrainConfig& config,
                           const AdamState& adam, const Vocabulary& vocab,
                           const std::vector<EpochStats>& history) {
    Checkpoint ck;
    ck.config["train"] = config.to_json();
    ck.config["optimizer"] = {{"step", adam.step},
                              {"beta1", adam.beta1},
                              {"beta2", adam.beta2},
                              {"epsilon", adam.epsilon},
                              {"learning_rate", adam.learning_rate}};
    ck.config["vocab"] = vocab.tokens;
    ck.metrics_history = history;
    for (const auto& [name, m] : params.groups()) ck.tensors.emplace_back(name, *m);
    ck.tensors.emplace_back("adam.m", Matrix(1, adam.m.size(), adam.m));
    ck.tensors.emplace_back("adam.v", Matrix(1, adam.v.size(), adam.v));
    return ck;
}

void unpack_checkpoint(const Checkpoint& ck, ModelParams& params, TrainConfig& config,
                       AdamState& adam, Vocabulary& vocab) {
    config = TrainConfig::from_json(ck.config.at("train"));
    vocab.tokens = ck.config.value("vocab", std::vector<std::string>{});
    vocab.index.clear();
    for (std::size_t i = 0; i < vocab.tokens.size(); ++i)
        vocab.index[vocab.tokens[i]] = static_cast<int>(i);

    params = init_params(config, vocab.tokens.size());
    for (auto& [name, m] : params.groups()) *m = ck.tensor(name);

    const Matrix& am = ck.tensor("adam.m");
    const Matrix& av = ck.tensor("adam.v");
    adam = AdamState(am.size(), config.learning_rate);
    adam.m = am.raw();
    adam.v = av.raw();
    const json& opt = ck.config.at("optimizer");
    adam.step = opt.at("step").get<std::int64_t>();
    adam.beta1 = opt.at("beta1").get<double>();
    adam.beta2 = opt.at("beta2").get<double>();
    adam.epsilon = opt.at("epsilon").get<double>();
    adam.learning_rate = opt.at("learning_rate").get<double>();
}

namespace {

GraphBundle cached_bundle(const RawSample& s, const TrainConfig& config,
                          const std::string& cache_dir, bool use_cache) {
    if (!use_cache || cache_dir.empty()) return extract_bundle(s.source);
    const std::string key = std::to_string(
        fnv1a_str(s.id + "\x1f" + s.source + "\x1f" + std::to_string(config.l_max) + "\x1fv1"));
    const std::filesystem::path path = std::filesystem::path(cache_dir) / (key + ".bundle.json");
    if (std::filesystem::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            return import_bundle_json(ss.str());
        } catch (const std::exception&) {
            // fall through to re-extract on a corrupt cache entry
        }
    }
    GraphBundle b = extract_bundle(s.source);
    std::filesystem::create_directories(cache_dir);
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << export_bundle(b);
    }
    std::filesystem::rename(tmp, path);
    return b;
}

}  // namespace

TrainResult train(const std::vector<RawSample>& samples, const CorpusSplit& split,
                  const TrainConfig& cfg_in, const std::optional<std::string>& embeddings_path,
                  const std::string& cache_dir, bool use_cache) {
    TrainConfig config = cfg_in;
    config.grsa.seq_len = config.l_max;
    config.validate();
    if (split.train.empty()) throw ModelError("train: empty training split");

    std::unordered_map<std::string, const RawSample*> by_id;
    for (const RawSample& s : samples) by_id[s.id] = &s;
    auto lookup = [&](const std::string& id) -> const RawSample& {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ModelError("split references unknown sample id " + id);
        return *it->second;
    };

    TrainResult result;
    EmbeddingProvider provider;
    if (embeddings_path) {
        provider = make_precomputed_provider(*embeddings_path);
        config.grsa.d_emb = provider.d;
    } else {
        // vocabulary from the training split only
        std::vector<TokenStream> streams;
        for (const std::string& id : split.train)
            streams.push_back(truncate(tokenize(lookup(id).source), config.l_max));
        result.vocab = build_vocab(streams, config.vocab_min_count);
        provider.kind = ProviderKind::TrainableTable;
        provider.vocab = &result.vocab;
        provider.d = config.grsa.d_emb;
    }

    ModelParams params = init_params(config, embeddings_path ? 0 : result.vocab.size());
    provider.table = &params.embedding;

    auto prep = [&](const std::vector<std::string>& ids) {
        std::vector<SampleInputs> out;
        for (const std::string& id : ids) {
            const RawSample& s = lookup(id);
            out.push_back(inputs_from_bundle(cached_bundle(s, config, cache_dir, use_cache),
                                             s, provider, config));
        }
        return out;
    };
    std::vector<SampleInputs> train_inputs = prep(split.train);
    std::vector<SampleInputs> val_inputs = prep(split.validation);

    // Embeddings are re-read from the live table each forward pass, so the
    // precomputed values captured above are only valid for that provider
    // kind; for the trainable table we re-embed per batch below.
    const bool trainable = !embeddings_path;

    std::vector<double> flat = params.flatten();
    AdamState adam(flat.size(), config.learning_rate);
    std::mt19937_64 rng(config.seed + 0x9e3779b97f4a7c15ull);

    bool have_best = false;
    double best_acc = -1.0, best_loss = 0.0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order(train_inputs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng() % i]);

        double epoch_loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t off = 0; off < order.size(); off += config.batch_size) {
            const std::size_t end = std::min(order.size(), off + config.batch_size);
            std::vector<const SampleInputs*> batch;
            for (std::size_t i = off; i < end; ++i) {
                SampleInputs& x = train_inputs[order[i]];
                if (trainable) refresh_embedding(x, params.embedding);
                batch.push_back(&x);
            }
            ModelGrads grads = zero_grads(params);
            const double loss = batch_loss_and_grads(batch, params, config, &grads);
            if (!std::isfinite(loss))
                throw ModelError("non-finite training loss at epoch " + std::to_string(epoch) +
                                 ", batch offset " + std::to_string(off));
            epoch_loss_sum += loss * static_cast<double>(batch.size());
            seen += batch.size();

            flat = params.flatten();
            adam_step(flat, grads.flatten(), adam);
            params.unflatten(flat);
        }

        // validation pass on the updated parameters
        double val_loss = 0.0, val_acc = 0.0;
        if (!val_inputs.empty()) {
            std::vector<double> probs;
            std::vector<int> labels;
            std::size_t correct = 0;
            for (SampleInputs& x : val_inputs) {
                if (trainable) refresh_embedding(x, params.embedding);
                const double p = forward(x, params, config);
                probs.push_back(p);
                labels.push_back(x.label);
                if ((p >= 0.5 ? 1 : 0) == x.label) ++correct;
            }
            val_loss = cross_entropy(probs, labels);
            val_acc = static_cast<double>(correct) / static_cast<double>(val_inputs.size());
        }

        EpochStats stats;
        stats.epoch = static_cast<int>(epoch);
        stats.train_loss = epoch_loss_sum / static_cast<double>(seen);
        stats.validation_loss = val_loss;
        stats.validation_accuracy = val_acc;
        result.history.push_back(stats);

        const bool better = !have_best || val_acc > best_acc ||
                            (val_acc == best_acc && val_loss < best_loss);
        if (better) {
            have_best = true;
            best_acc = val_acc;
            best_loss = val_loss;
            result.best = make_checkpoint(params, config, adam, result.vocab, result.history);
        }
    }

    result.final_state = make_checkpoint(params, config, adam, result.vocab, result.history);
    if (!have_best) result.best = result.final_state;
    return result;
}

}  // namespace dvs
