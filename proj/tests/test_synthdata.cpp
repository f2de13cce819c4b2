#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "orthodistill/embed_io.hpp"
#include "orthodistill/synthdata.hpp"
#include "orthodistill/util.hpp"
#include "oracles.hpp"

using namespace orthodistill;

namespace {
bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.n_classes != b.n_classes || a.samples.size() != b.samples.size()) return false;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        if (a.samples[i].label != b.samples[i].label) return false;
        if (!(a.samples[i].tokens.class_token == b.samples[i].tokens.class_token)) return false;
        if (!(a.samples[i].tokens.patch_tokens == b.samples[i].tokens.patch_tokens)) return false;
    }
    return true;
}
}  // namespace

TEST_CASE("generation is a pure function of spec and seed") {
    DatasetSpec spec{12, 3, 6, 2, 1.5};
    Dataset a = gen_token_dataset(spec, 99);
    Dataset b = gen_token_dataset(spec, 99);
    CHECK(datasets_equal(a, b));
    Dataset c = gen_token_dataset(spec, 100);
    CHECK_FALSE(datasets_equal(a, c));

    // balanced up to remainder, every class non-empty
    std::vector<int> counts(3, 0);
    for (const Sample& s : a.samples) counts[static_cast<std::size_t>(s.label)]++;
    CHECK(counts[0] == 4);
    CHECK(counts[1] == 4);
    CHECK(counts[2] == 4);
}

TEST_CASE("generator rejects invalid counts") {
    CHECK_THROWS_AS(gen_token_dataset({1, 2, 4, 0, 1.0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_token_dataset({4, 1, 4, 0, 1.0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_token_dataset({4, 2, 1, 0, 1.0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_token_dataset({4, 2, 4, 0, -1.0}, 1), std::invalid_argument);
}

TEST_CASE("zero separation leaves class-conditional means indistinguishable") {
    DatasetSpec spec{10000, 2, 4, 0, 0.0};
    Dataset data = gen_token_dataset(spec, 2718);
    std::vector<double> mean0(4, 0.0), mean1(4, 0.0);
    double n0 = 0.0, n1 = 0.0;
    for (const Sample& s : data.samples) {
        auto& m = s.label == 0 ? mean0 : mean1;
        (s.label == 0 ? n0 : n1) += 1.0;
        for (std::size_t j = 0; j < 4; ++j) m[j] += s.tokens.class_token[j];
    }
    double bound = 4.0 / std::sqrt(static_cast<double>(data.samples.size()));
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(std::abs(mean0[j] / n0 - mean1[j] / n1) < bound);
}

TEST_CASE("large separation makes inputs 1-NN separable") {
    DatasetSpec spec{1000, 2, 8, 0, 50.0};
    Dataset data = gen_token_dataset(spec, 7);
    // split half train / half query, brute-force 1-NN oracle on cosine distance
    std::size_t half = 500, d = 8;
    Tensor train({half, d});
    std::vector<int> labels(half);
    for (std::size_t i = 0; i < half; ++i) {
        for (std::size_t j = 0; j < d; ++j) train.at(i, j) = data.samples[i].tokens.class_token[j];
        labels[i] = data.samples[i].label;
    }
    std::size_t hits = 0;
    for (std::size_t i = half; i < 1000; ++i) {
        int pred = oracle::nn1_label(train, labels, data.samples[i].tokens.class_token.data(), d);
        if (pred == data.samples[i].label) ++hits;
    }
    CHECK(static_cast<double>(hits) / 500.0 > 0.99);
}

TEST_CASE("teacher forward is deterministic and token-wise") {
    SyntheticTeacher t = make_teacher(5, 8, 6, 1.0, 13);
    DatasetSpec spec{4, 2, 5, 3, 1.0};
    Dataset data = gen_token_dataset(spec, 3);

    TokenSet a = teacher_forward(t, data.samples[0].tokens);
    TokenSet b = teacher_forward(t, data.samples[0].tokens);
    CHECK(a.class_token == b.class_token);
    CHECK(a.patch_tokens == b.patch_tokens);

    // two inputs differing only in one patch token differ only there
    TokenSet in1 = data.samples[1].tokens;
    TokenSet in2 = in1;
    for (std::size_t j = 0; j < 5; ++j) in2.patch_tokens.at(1, j) += 0.5;
    TokenSet out1 = teacher_forward(t, in1);
    TokenSet out2 = teacher_forward(t, in2);
    CHECK(out1.class_token == out2.class_token);
    for (std::size_t j = 0; j < 6; ++j) {
        CHECK(out1.patch_tokens.at(0, j) == out2.patch_tokens.at(0, j));
        CHECK(out1.patch_tokens.at(2, j) == out2.patch_tokens.at(2, j));
    }
    bool differs = false;
    for (std::size_t j = 0; j < 6; ++j)
        differs = differs || out1.patch_tokens.at(1, j) != out2.patch_tokens.at(1, j);
    CHECK(differs);

    CHECK_THROWS_AS(teacher_forward(t, TokenSet{Tensor::ones({4}), Tensor({0, 4})}),
                    std::invalid_argument);
}

TEST_CASE("zero inputs through an offset-free teacher give one constant token") {
    SyntheticTeacher t = make_teacher(5, 8, 6, 0.0, 17);
    for (std::size_t j = 0; j < 6; ++j) CHECK(t.class_offset[j] == 0.0);

    TokenSet zeros{Tensor::zeros({5}), Tensor::zeros({2, 5})};
    TokenSet out = teacher_forward(t, zeros);

    // tanh(bias)-determined constant: W2^T tanh(b1) + b2
    for (std::size_t o = 0; o < 6; ++o) {
        double want = t.b2[o];
        for (std::size_t h = 0; h < 8; ++h) want += std::tanh(t.b1[h]) * t.w2.at(h, o);
        CHECK(out.class_token[o] == doctest::Approx(want).epsilon(1e-12));
        CHECK(out.patch_tokens.at(0, o) == out.class_token[o]);
        CHECK(out.patch_tokens.at(1, o) == out.class_token[o]);
    }
}

TEST_CASE("embedding files round-trip") {
    DatasetSpec spec{6, 2, 4, 2, 2.0};
    Dataset data = gen_token_dataset(spec, 5);

    std::filesystem::path dir = std::filesystem::temp_directory_path() / "orthodistill_embed_test";
    std::filesystem::create_directories(dir);
    std::string p1 = (dir / "a.bin").string();
    std::string p2 = (dir / "b.bin").string();

    save_dataset(p1, data);
    Dataset loaded = load_dataset(p1);
    CHECK(loaded.n_classes == 2);
    CHECK(loaded.samples.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(loaded.samples[i].label == data.samples[i].label);
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(loaded.samples[i].tokens.class_token[j] ==
                  static_cast<double>(static_cast<float>(data.samples[i].tokens.class_token[j])));
    }

    // the f32 payload is bit-exact across a save/load/save cycle
    save_dataset(p2, loaded);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    // empty list: valid file, loads back empty
    std::string p3 = (dir / "empty.bin").string();
    save_embeddings(p3, {}, 0);
    EmbeddingFile empty = load_embeddings(p3);
    CHECK(empty.sets.empty());

    std::filesystem::remove_all(dir);
}

TEST_CASE("embedding file errors are distinct") {
    std::filesystem::path dir = std::filesystem::temp_directory_path() / "orthodistill_io_errs";
    std::filesystem::create_directories(dir);
    DatasetSpec spec{4, 2, 3, 1, 1.0};
    Dataset data = gen_token_dataset(spec, 5);
    std::string good = (dir / "good.bin").string();
    save_dataset(good, data);

    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    // truncated payload
    std::string trunc_path = (dir / "trunc.bin").string();
    std::ofstream(trunc_path, std::ios::binary) << bytes.substr(0, bytes.size() - 5);
    CHECK_THROWS_AS(load_embeddings(trunc_path), TruncatedPayloadError);

    // malformed header
    std::string bad_path = (dir / "bad.bin").string();
    std::ofstream(bad_path, std::ios::binary) << "{not json\n1234";
    CHECK_THROWS_AS(load_embeddings(bad_path), MalformedHeaderError);

    std::string wrong_magic = (dir / "magic.bin").string();
    std::ofstream(wrong_magic, std::ios::binary) << "{\"magic\":\"NOPE\"}\n";
    CHECK_THROWS_AS(load_embeddings(wrong_magic), MalformedHeaderError);

    // dimension inconsistency: labels array shorter than n_samples
    std::size_t nl = bytes.find('\n');
    std::string header = bytes.substr(0, nl);
    std::string payload = bytes.substr(nl + 1);
    std::size_t labels_pos = header.find("\"labels\":[");
    std::string broken = header.substr(0, labels_pos) + "\"labels\":[0]}";
    std::string dim_path = (dir / "dim.bin").string();
    std::ofstream(dim_path, std::ios::binary) << broken << "\n" << payload;
    CHECK_THROWS_AS(load_embeddings(dim_path), DimensionMismatchError);

    std::filesystem::remove_all(dir);
}
