#include "dvs/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

namespace dvs {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'D', 'V', 'S', 'C', 'K', 'P', 'T', '1'};

std::uint64_t fnv1a(const char* data, std::size_t len) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ull;
    }
    return h;
}

// largest-remainder apportionment; ties go to the earlier split
std::array<std::size_t, 3> apportion(std::size_t n, SplitRatios r) {
    const double quotas[3] = {n * r.train, n * r.validation, n * r.test};
    std::array<std::size_t, 3> sizes{};
    double fracs[3];
    std::size_t used = 0;
    for (int i = 0; i < 3; ++i) {
        sizes[i] = static_cast<std::size_t>(quotas[i]);
        fracs[i] = quotas[i] - static_cast<double>(sizes[i]);
        used += sizes[i];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return fracs[a] > fracs[b]; });
    for (std::size_t k = 0; used < n; ++k) {
        sizes[order[k % 3]] += 1;
        ++used;
    }
    return sizes;
}

void shuffle_ids(std::vector<std::string>& ids, std::mt19937_64& rng) {
    for (std::size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[rng() % i]);
}

}  // namespace

std::vector<RawSample> load_corpus_text(const std::string& text, const std::string& origin) {
    std::vector<RawSample> out;
    std::unordered_set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw CorpusError(origin + ":" + std::to_string(lineno) +
                              ": malformed JSON: " + e.what());
        }
        if (!rec.contains("func") || !rec["func"].is_string())
            throw CorpusError(origin + ":" + std::to_string(lineno) +
                              ": missing string field \"func\"");
        if (!rec.contains("target") || !rec["target"].is_number_integer())
            throw CorpusError(origin + ":" + std::to_string(lineno) +
                              ": missing integer field \"target\"");
        RawSample s;
        s.source = rec["func"].get<std::string>();
        s.label = rec["target"].get<int>();
        if (s.label != 0 && s.label != 1)
            throw CorpusError(origin + ":" + std::to_string(lineno) + ": label " +
                              std::to_string(s.label) + " outside {0,1}");
        if (s.source.empty())
            throw CorpusError(origin + ":" + std::to_string(lineno) + ": empty \"func\"");
        s.id = rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>()
                                                          : std::to_string(lineno);
        if (!seen.insert(s.id).second)
            throw CorpusError(origin + ":" + std::to_string(lineno) + ": duplicate id \"" +
                              s.id + "\"");
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<RawSample> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot open corpus file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_corpus_text(ss.str(), path);
}

CorpusSplit split_corpus(const std::vector<RawSample>& samples, SplitRatios ratios,
                         std::uint64_t seed, bool stratify) {
    const double sum = ratios.train + ratios.validation + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw CorpusError("split ratios sum to " + std::to_string(sum) + ", expected 1");
    if (samples.size() < 3) throw CorpusError("corpus too small to split (need >= 3 samples)");

    CorpusSplit split;
    split.seed = seed;
    std::mt19937_64 rng(seed);

    auto assign = [&](std::vector<std::string> ids) {
        shuffle_ids(ids, rng);
        const auto sizes = apportion(ids.size(), ratios);
        std::size_t p = 0;
        for (std::size_t i = 0; i < sizes[0]; ++i) split.train.push_back(ids[p++]);
        for (std::size_t i = 0; i < sizes[1]; ++i) split.validation.push_back(ids[p++]);
        for (std::size_t i = 0; i < sizes[2]; ++i) split.test.push_back(ids[p++]);
    };

    if (stratify) {
        std::vector<std::string> pos, neg;
        for (const RawSample& s : samples) (s.label ? pos : neg).push_back(s.id);
        assign(std::move(neg));
        assign(std::move(pos));
    } else {
        std::vector<std::string> ids;
        ids.reserve(samples.size());
        for (const RawSample& s : samples) ids.push_back(s.id);
        assign(std::move(ids));
    }
    return split;
}

std::string export_split(const CorpusSplit& s) {
    return json{{"train", s.train},
                {"validation", s.validation},
                {"test", s.test},
                {"seed", s.seed}}
        .dump(2);
}

CorpusSplit import_split_json(const std::string& json_text) {
    try {
        json j = json::parse(json_text);
        CorpusSplit s;
        s.train = j.at("train").get<std::vector<std::string>>();
        s.validation = j.at("validation").get<std::vector<std::string>>();
        s.test = j.at("test").get<std::vector<std::string>>();
        s.seed = j.at("seed").get<std::uint64_t>();
        return s;
    } catch (const json::exception& e) {
        throw CorpusError(std::string("split JSON: ") + e.what());
    }
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return m;
    throw CorpusError("checkpoint has no tensor \"" + name + "\"");
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    json header;
    header["format_version"] = ck.format_version;
    header["config"] = ck.config;
    json hist = json::array();
    for (const EpochStats& e : ck.metrics_history)
        hist.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"validation_loss", e.validation_loss},
                        {"validation_accuracy", e.validation_accuracy}});
    header["metrics_history"] = hist;

    std::string payload;
    json dir = json::array();
    for (const auto& [name, m] : ck.tensors) {
        dir.push_back({{"name", name},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"offset", payload.size()}});
        const std::size_t bytes = m.size() * sizeof(double);
        const std::size_t old = payload.size();
        payload.resize(old + bytes);
        std::memcpy(payload.data() + old, m.data(), bytes);
    }
    header["tensors"] = dir;
    const std::string head = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CorpusError("cannot write checkpoint: " + tmp);
        out.write(kMagic, sizeof(kMagic));
        const std::uint64_t hlen = head.size();
        const std::uint64_t plen = payload.size();
        const std::uint64_t sum = fnv1a(payload.data(), payload.size());
        out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
        out.write(head.data(), static_cast<std::streamsize>(head.size()));
        out.write(reinterpret_cast<const char*>(&plen), sizeof(plen));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
        if (!out) throw CorpusError("write failure on checkpoint: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CorpusError("not a checkpoint file: " + path);
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
    if (!in) throw CorpusError("truncated checkpoint: " + path);
    if (fnv1a(payload.data(), payload.size()) != sum)
        throw CorpusError("checksum failure in checkpoint: " + path);

    json header;
    try {
        header = json::parse(head);
    } catch (const json::exception& e) {
        throw CorpusError("corrupt checkpoint header: " + std::string(e.what()));
    }
    Checkpoint ck;
    ck.format_version = header.at("format_version").get<int>();
    if (ck.format_version != Checkpoint::kFormatVersion)
        throw CorpusError("checkpoint format_version " + std::to_string(ck.format_version) +
                          " unsupported (expected " +
                          std::to_string(Checkpoint::kFormatVersion) + ")");
    ck.config = header.at("config");
    for (const auto& e : header.at("metrics_history")) {
        EpochStats s;
        s.epoch = e.at("epoch").get<int>();
        s.train_loss = e.at("train_loss").get<double>();
        s.validation_loss = e.at("validation_loss").get<double>();
        s.validation_accuracy = e.at("validation_accuracy").get<double>();
        ck.metrics_history.push_back(s);
    }
    for (const auto& t : header.at("tensors")) {
        const std::size_t rows = t.at("rows").get<std::size_t>();
        const std::size_t cols = t.at("cols").get<std::size_t>();
        const std::size_t offset = t.at("offset").get<std::size_t>();
        const std::size_t bytes = rows * cols * sizeof(double);
        if (offset + bytes > payload.size())
            throw CorpusError("tensor \"" + t.at("name").get<std::string>() +
                              "\" exceeds payload");
        Matrix m(rows, cols);
        std::memcpy(m.data(), payload.data() + offset, bytes);
        ck.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
    }
    return ck;
}

}  // namespace dvs
