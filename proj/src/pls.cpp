#include "dvs/pls.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dvs {

namespace {

using nlohmann::json;

constexpr char kEmbMagic[8] = {'D', 'V', 'S', 'E', 'M', 'B', '0', '1'};

std::uint64_t fnv1a(const char* data, std::size_t len) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

Vocabulary build_vocab(const std::vector<TokenStream>& train_streams, std::size_t min_count) {
    if (train_streams.empty()) throw PlsError("build_vocab: empty training set");
    std::map<std::string, std::size_t> freq;  // ordered map fixes text ordering
    for (const TokenStream& ts : train_streams)
        for (const Token& t : ts.tokens) ++freq[t.text];

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [text, count] : freq)
        if (count >= min_count) kept.emplace_back(text, count);
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocabulary v;
    v.tokens.push_back("<unk>");
    for (const auto& [text, count] : kept) v.tokens.push_back(text);
    for (std::size_t i = 0; i < v.tokens.size(); ++i)
        v.index[v.tokens[i]] = static_cast<int>(i);
    return v;
}

std::string export_vocab(const Vocabulary& v) {
    return json{{"tokens", v.tokens}}.dump();
}

Vocabulary import_vocab_json(const std::string& json_text) {
    try {
        Vocabulary v;
        v.tokens = json::parse(json_text).at("tokens").get<std::vector<std::string>>();
        for (std::size_t i = 0; i < v.tokens.size(); ++i)
            v.index[v.tokens[i]] = static_cast<int>(i);
        return v;
    } catch (const json::exception& e) {
        throw PlsError(std::string("vocab JSON: ") + e.what());
    }
}

EmbeddingMatrix embed(const TokenStream& ts, const EmbeddingProvider& provider,
                      const std::string& sample_id, std::size_t l) {
    EmbeddingMatrix em;
    em.values = Matrix(l, provider.d);
    em.pad_mask.assign(l, false);
    em.token_rows.assign(l, -1);
    const std::size_t n = std::min(ts.tokens.size(), l);

    if (provider.kind == ProviderKind::TrainableTable) {
        if (!provider.vocab || !provider.table)
            throw PlsError("trainable provider not initialized");
        if (provider.table->cols() != provider.d)
            throw PlsError("embedding table width mismatch");
        for (std::size_t t = 0; t < n; ++t) {
            const int row = provider.vocab->lookup(ts.tokens[t].text);
            em.token_rows[t] = row;
            for (std::size_t c = 0; c < provider.d; ++c)
                em.values(t, c) = (*provider.table)(row, c);
            em.pad_mask[t] = true;
        }
    } else {
        auto it = provider.precomputed.find(sample_id);
        if (it == provider.precomputed.end())
            throw PlsError("precomputed embeddings missing sample id \"" + sample_id + "\"");
        const Matrix& src = it->second;
        if (src.cols() != provider.d)
            throw PlsError("precomputed embedding width " + std::to_string(src.cols()) +
                           " != configured " + std::to_string(provider.d));
        for (std::size_t t = 0; t < n; ++t) {
            if (t < src.rows())
                for (std::size_t c = 0; c < provider.d; ++c) em.values(t, c) = src(t, c);
            em.pad_mask[t] = true;
        }
    }
    return em;
}

void save_embedding_file(const std::map<std::string, Matrix>& per_sample,
                         const std::string& path) {
    std::string payload;
    json dir = json::array();
    for (const auto& [id, m] : per_sample) {
        dir.push_back({{"id", id}, {"rows", m.rows()}, {"cols", m.cols()},
                       {"offset", payload.size()}});
        const std::size_t bytes = m.size() * sizeof(double);
        const std::size_t old = payload.size();
        payload.resize(old + bytes);
        std::memcpy(payload.data() + old, m.data(), bytes);
    }
    const std::string head = json{{"samples", dir}}.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw PlsError("cannot write embedding file: " + tmp);
        out.write(kEmbMagic, sizeof(kEmbMagic));
        const std::uint64_t hlen = head.size(), plen = payload.size();
        const std::uint64_t sum = fnv1a(payload.data(), payload.size());
        out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
        out.write(head.data(), static_cast<std::streamsize>(head.size()));
        out.write(reinterpret_cast<const char*>(&plen), sizeof(plen));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
        if (!out) throw PlsError("write failure on embedding file: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::map<std::string, Matrix> load_embedding_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PlsError("cannot open embedding file: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kEmbMagic, sizeof(kEmbMagic)) != 0)
        throw PlsError("not an embedding container: " + path);
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string head(hlen, '\0');
    in.read(head.data(), static_cast<std::streamsize>(hlen));
    std::uint64_t plen = 0;
    in.read(reinterpret_cast<char*>(&plen), sizeof(plen));
    std::string payload(plen, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(plen));
    std::uint64_t sum = 0;
    in.read(reinterpret_cast<char*>(&sum), sizeof(sum));
    if (!in) throw PlsError("truncated embedding file: " + path);
    if (fnv1a(payload.data(), payload.size()) != sum)
        throw PlsError("checksum failure in embedding file: " + path);

    std::map<std::string, Matrix> out;
    try {
        json header = json::parse(head);
        for (const auto& t : header.at("samples")) {
            const std::size_t rows = t.at("rows").get<std::size_t>();
            const std::size_t cols = t.at("cols").get<std::size_t>();
            const std::size_t offset = t.at("offset").get<std::size_t>();
            if (offset + rows * cols * sizeof(double) > payload.size())
                throw PlsError("embedding block exceeds payload");
            Matrix m(rows, cols);
            std::memcpy(m.data(), payload.data() + offset, rows * cols * sizeof(double));
            out.emplace(t.at("id").get<std::string>(), std::move(m));
        }
    } catch (const json::exception& e) {
        throw PlsError(std::string("embedding index JSON: ") + e.what());
    }
    return out;
}

EmbeddingProvider make_precomputed_provider(const std::string& path) {
    EmbeddingProvider p;
    p.kind = ProviderKind::PrecomputedFile;
    p.precomputed = load_embedding_file(path);
    if (p.precomputed.empty()) throw PlsError("embedding container is empty: " + path);
    p.d = p.precomputed.begin()->second.cols();
    return p;
}

}  // namespace dvs
