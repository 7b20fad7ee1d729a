#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dvs/corpus.hpp"

using namespace dvs;

namespace {

std::vector<RawSample> synthetic(std::size_t n, double pos_fraction = 0.5) {
    std::vector<RawSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        RawSample s;
        s.id = "s" + std::to_string(i);
        s.source = "int f" + std::to_string(i) + "() { return " + std::to_string(i) + "; }";
        s.label = i < static_cast<std::size_t>(n * pos_fraction) ? 1 : 0;
        out.push_back(std::move(s));
    }
    return out;
}

std::string temp_path(const char* stem) {
    return (std::filesystem::temp_directory_path() / stem).string();
}

}  // namespace

TEST_CASE("load JSONL with and without explicit ids") {
    const std::string text =
        "{\"func\": \"int a() { return 0; }\", \"target\": 0}\n"
        "\n"
        "{\"id\": \"x42\", \"func\": \"int b() { return 1; }\", \"target\": 1}\n";
    auto samples = load_corpus_text(text, "mem");
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].id == "1");  // 1-based line number
    CHECK(samples[0].label == 0);
    CHECK(samples[1].id == "x42");
    CHECK(samples[1].label == 1);
    CHECK(samples[1].source == "int b() { return 1; }");
}

TEST_CASE("malformed corpora name the offending line") {
    auto expect_msg = [](const std::string& text, const std::string& needle) {
        try {
            load_corpus_text(text, "mem");
            FAIL_CHECK("expected CorpusError");
        } catch (const CorpusError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_msg("not json\n", "mem:1");
    expect_msg("{\"func\": \"x\", \"target\": 0}\n{\"target\": 1}\n", "mem:2");
    expect_msg("{\"func\": \"x\", \"target\": 7}\n", "outside {0,1}");
    expect_msg("{\"func\": \"\", \"target\": 0}\n", "empty");
    expect_msg("{\"id\":\"a\",\"func\":\"x\",\"target\":0}\n"
               "{\"id\":\"a\",\"func\":\"y\",\"target\":0}\n",
               "duplicate");
    CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), CorpusError);
}

TEST_CASE("largest-remainder split sizes") {
    // benchmark-style sizes: 4919 samples at the exact published fractions
    auto big = synthetic(4919);
    SplitRatios r{3958.0 / 4919.0, 462.0 / 4919.0, 499.0 / 4919.0};
    CorpusSplit s = split_corpus(big, r, 7);
    CHECK(s.train.size() == 3958);
    CHECK(s.validation.size() == 462);
    CHECK(s.test.size() == 499);

    auto ten = synthetic(10);
    CorpusSplit t = split_corpus(ten, SplitRatios{}, 1);
    CHECK(t.train.size() == 8);
    CHECK(t.validation.size() == 1);
    CHECK(t.test.size() == 1);
}

TEST_CASE("split is a deterministic partition") {
    auto samples = synthetic(137, 0.3);
    CorpusSplit a = split_corpus(samples, SplitRatios{}, 99);
    CorpusSplit b = split_corpus(samples, SplitRatios{}, 99);
    CHECK(a == b);
    CorpusSplit c = split_corpus(samples, SplitRatios{}, 100);
    CHECK(a != c);

    std::set<std::string> seen;
    for (const auto* part : {&a.train, &a.validation, &a.test})
        for (const auto& id : *part) CHECK(seen.insert(id).second);
    CHECK(seen.size() == samples.size());
}

TEST_CASE("stratified split balances labels") {
    auto samples = synthetic(100, 0.2);  // 20 positive, 80 negative
    CorpusSplit s = split_corpus(samples, SplitRatios{}, 5, true);
    CHECK(s.train.size() + s.validation.size() + s.test.size() == 100);
    auto count_pos = [&](const std::vector<std::string>& ids) {
        std::size_t pos = 0;
        for (const auto& id : ids)
            for (const auto& smp : samples)
                if (smp.id == id && smp.label == 1) ++pos;
        return pos;
    };
    CHECK(count_pos(s.train) == 16);
    CHECK(count_pos(s.validation) == 2);
    CHECK(count_pos(s.test) == 2);
}

TEST_CASE("split validation errors") {
    auto samples = synthetic(10);
    CHECK_THROWS_AS(split_corpus(samples, SplitRatios{0.5, 0.2, 0.2}, 0), CorpusError);
    CHECK_THROWS_AS(split_corpus(synthetic(2), SplitRatios{}, 0), CorpusError);
}

TEST_CASE("split JSON round-trip") {
    CorpusSplit s = split_corpus(synthetic(23), SplitRatios{}, 3);
    CorpusSplit back = import_split_json(export_split(s));
    CHECK(back == s);
    CHECK_THROWS_AS(import_split_json("nope"), CorpusError);
}

TEST_CASE("checkpoint round-trip preserves everything bit for bit") {
    Checkpoint ck;
    ck.config = {{"learning_rate", 1e-5}, {"note", "abc"}};
    ck.metrics_history = {{1, 0.7, 0.71, 0.5}, {2, 0.6, 0.65, 0.625}};
    Matrix a(3, 4);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(-1, 1);
    for (double& v : a.raw()) v = d(rng);
    Matrix b(1, 5, {0.0, -0.0, 1e-300, 1e300, 3.14});
    ck.tensors = {{"alpha", a}, {"beta", b}};

    const std::string path = temp_path("dvs_ck_test.bin");
    save_checkpoint(ck, path);
    Checkpoint back = load_checkpoint(path);
    CHECK(back == ck);
    CHECK(back.tensor("beta")(0, 3) == 1e300);
    CHECK_THROWS_AS(back.tensor("gamma"), CorpusError);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects corruption") {
    Checkpoint ck;
    ck.tensors = {{"t", Matrix(2, 2, {1, 2, 3, 4})}};
    const std::string path = temp_path("dvs_ck_corrupt.bin");
    save_checkpoint(ck, path);

    // flip one payload byte
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-9, std::ios::end);  // inside the payload, before the checksum
        char c;
        f.seekg(-9, std::ios::end);
        f.get(c);
        f.seekp(-9, std::ios::end);
        f.put(static_cast<char>(c ^ 0x1));
    }
    CHECK_THROWS_AS(load_checkpoint(path), CorpusError);

    // truncate
    save_checkpoint(ck, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 12);
    CHECK_THROWS_AS(load_checkpoint(path), CorpusError);

    // wrong magic
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << "NOTACKPTxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_AS(load_checkpoint(path), CorpusError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ck.bin"), CorpusError);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint version mismatch is rejected") {
    Checkpoint ck;
    ck.format_version = Checkpoint::kFormatVersion + 1;
    ck.tensors = {{"t", Matrix(1, 1, {1})}};
    const std::string path = temp_path("dvs_ck_version.bin");
    save_checkpoint(ck, path);
    try {
        load_checkpoint(path);
        FAIL_CHECK("expected CorpusError");
    } catch (const CorpusError& e) {
        CHECK(std::string(e.what()).find("format_version") != std::string::npos);
    }
    std::remove(path.c_str());
}
