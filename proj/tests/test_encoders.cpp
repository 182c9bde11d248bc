#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "test_helpers.hpp"
#include "uap/encoders.hpp"
#include "uap/errors.hpp"
#include "uap/fixtures.hpp"
#include "uap/ops.hpp"

using namespace uap;
using namespace uap::testing;

TEST_SUITE_BEGIN("encoders");

namespace {

#ifndef GOLDEN_DIR
#define GOLDEN_DIR "tests/golden"
#endif

// fraction of the disc around (row,col) covered by the mask
double disc_coverage(const BinaryMask& mask, int row, int col, double radius) {
    int inside = 0, covered = 0;
    for (int i = 0; i < mask.h; ++i)
        for (int j = 0; j < mask.w; ++j) {
            double dr = i - row, dc = j - col;
            if (dr * dr + dc * dc <= radius * radius) {
                ++inside;
                if (mask.at(i, j)) ++covered;
            }
        }
    return inside == 0 ? 0.0 : static_cast<double>(covered) / inside;
}

}  // namespace

TEST_CASE("encode is deterministic bitwise") {
    auto seg = make_toy_segmenter(7);
    Rng rng(10);
    ImageTensor img = random_array({64, 64, 3}, rng, 0.0, 1.0);
    FeatureMap a = seg->encoder().encode(img);
    FeatureMap b = seg->encoder().encode(img);
    CHECK(a.v == b.v);
    CHECK(a.shape == Shape3{8, 8, 16});
}

TEST_CASE("encode on all-zeros matches the recorded golden snapshot") {
    auto seg = make_toy_segmenter(7);
    FeatureMap fm = seg->encoder().encode(ImageTensor(64, 64, 3));

    std::string path = std::string(GOLDEN_DIR) + "/encode_zeros_seed7.txt";
    std::ifstream is(path);
    REQUIRE_MESSAGE(static_cast<bool>(is), "missing golden file ", path,
                    " (build and run the gen_golden tool once)");
    int h = 0, w = 0, d = 0;
    is >> h >> w >> d;
    REQUIRE(Shape3{h, w, d} == fm.shape);
    for (size_t i = 0; i < fm.v.size(); ++i) {
        std::string token;
        is >> token;
        REQUIRE_FALSE(token.empty());
        double want = std::strtod(token.c_str(), nullptr);
        CHECK(fm.v[i] == want);
    }
}

TEST_CASE("encode gradient matches central finite differences") {
    auto seg = make_toy_segmenter(7);
    const Encoder& enc = seg->encoder();
    Rng rng(11);
    ImageTensor img = random_array({64, 64, 3}, rng, 0.1, 0.9);

    // f(x) = mean(encode(x))
    double n = static_cast<double>(enc.feature_shape().count());
    FeatureMap ones(enc.feature_shape());
    for (double& x : ones.v) x = 1.0 / n;
    ImageTensor grad = enc.encode_vjp(img, ones);

    auto f = [&](const std::vector<double>& raw) {
        ImageTensor x = img;
        x.v = raw;
        FeatureMap fm = enc.encode(x);
        double acc = 0.0;
        for (double v : fm.v) acc += v;
        return acc / n;
    };

    for (int probe = 0; probe < 5; ++probe) {
        std::vector<double> dir = random_vector(img.v.size(), rng);
        double fd = directional_fd(f, img.v, dir, 1e-6);
        double analytic = dot(grad.v, dir);
        CHECK(rel_err(analytic, fd) < 1e-3);
    }
}

TEST_CASE("embed flattens and normalizes") {
    FeatureMap fm(1, 1, 2);
    fm.v = {3.0, 4.0};
    Embedding e = embed(fm);
    CHECK(e.v[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(e.v[1] == doctest::Approx(0.8).epsilon(1e-12));

    Rng rng(12);
    FeatureMap big = random_array({4, 5, 6}, rng);
    Embedding eb = embed(big);
    CHECK(eb.dim() == 4u * 5u * 6u);

    // flatten-then-normalize oracle
    double norm = std::sqrt(dot(big.v, big.v));
    for (size_t i = 0; i < big.v.size(); ++i)
        CHECK(std::abs(eb.v[i] - big.v[i] / norm) < 1e-9);

    CHECK_THROWS_AS(embed(FeatureMap(2, 2, 2)), DegenerateInputError);
}

TEST_CASE("embed_vjp matches finite differences") {
    Rng rng(13);
    FeatureMap fm = random_array({2, 3, 4}, rng);
    std::vector<double> g = random_vector(fm.v.size(), rng);
    FeatureMap grad = embed_vjp(fm, g);

    auto f = [&](const std::vector<double>& raw) {
        FeatureMap x = fm;
        x.v = raw;
        return dot(g, embed(x).v);
    };
    for (int probe = 0; probe < 5; ++probe) {
        std::vector<double> dir = random_vector(fm.v.size(), rng);
        double fd = directional_fd(f, fm.v, dir, 1e-7);
        CHECK(rel_err(dot(grad.v, dir), fd) < 1e-5);
    }
}

TEST_CASE("predict_mask is deterministic and segments the prompted blob") {
    auto seg = make_toy_segmenter(7);
    BlobFixture fx = two_blob_fixture();

    Prompt prompt = Prompt::point(fx.row_a, fx.col_a);
    MaskLogits l1 = seg->predict_mask(fx.image, prompt);
    MaskLogits l2 = seg->predict_mask(fx.image, prompt);
    CHECK(l1.v == l2.v);

    BinaryMask mask = binarize_mask(l1);
    CHECK(disc_coverage(mask, fx.row_a, fx.col_a, fx.radius_a) >= 0.8);
    CHECK(disc_coverage(mask, fx.row_b, fx.col_b, fx.radius_b) < 0.2);
}

TEST_CASE("predict_mask rejects out-of-bounds prompts") {
    auto seg = make_toy_segmenter(7);
    ImageTensor img(64, 64, 3);
    CHECK_THROWS_AS(seg->predict_mask(img, Prompt::point(64, 0)), ContractError);
    CHECK_THROWS_AS(seg->predict_mask(img, Prompt::box(4, 4, 4, 10)), ContractError);
    CHECK_THROWS_AS(seg->predict_mask(img, Prompt::box(4, 4, 2, 10)), ContractError);
}

TEST_CASE("predict_mask gradient matches central finite differences") {
    auto seg = make_toy_segmenter(3, {32, 32, 3}, {4, 4, 8});
    Rng rng(14);
    ImageTensor img = random_array({32, 32, 3}, rng, 0.1, 0.9);

    for (const Prompt& prompt : {Prompt::point(10, 20), Prompt::box(5, 6, 20, 25)}) {
        MaskLogits ones(32, 32, 1.0);
        ImageTensor grad = seg->predict_mask_vjp(img, prompt, ones);
        auto f = [&](const std::vector<double>& raw) {
            ImageTensor x = img;
            x.v = raw;
            MaskLogits logits = seg->predict_mask(x, prompt);
            double acc = 0.0;
            for (double v : logits.v) acc += v;
            return acc;
        };
        for (int probe = 0; probe < 5; ++probe) {
            std::vector<double> dir = random_vector(img.v.size(), rng);
            double fd = directional_fd(f, img.v, dir, 1e-6);
            CHECK(rel_err(dot(grad.v, dir), fd) < 1e-3);
        }
    }
}

TEST_CASE("make_toy_segmenter determinism and seed sensitivity") {
    auto a = make_toy_segmenter(7);
    auto b = make_toy_segmenter(7);
    auto c = make_toy_segmenter(8);
    CHECK(a->encoder().fingerprint() == b->encoder().fingerprint());
    CHECK(a->encoder().fingerprint() != c->encoder().fingerprint());

    Rng rng(15);
    ImageTensor img = random_array({64, 64, 3}, rng, 0.0, 1.0);
    CHECK(a->encoder().encode(img).v == b->encoder().encode(img).v);
    CHECK(a->encoder().encode(img).v != c->encoder().encode(img).v);

    CHECK_THROWS_AS(make_toy_segmenter(1, {64, 64, 3}, {7, 8, 16}), ContractError);
}

TEST_CASE("SEG1 checkpoint round trip and error contracts") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "uapkit_seg1_test";
    fs::create_directories(dir);
    std::string path = (dir / "toy.seg1").string();

    auto seg = make_toy_segmenter(21);
    save_segmenter(*seg, path);
    SegmenterHandle loaded = load_external_segmenter({"patch_attn", path, "cpu"});
    CHECK(loaded->encoder().fingerprint() == seg->encoder().fingerprint());

    BlobFixture fx = two_blob_fixture();
    Prompt prompt = Prompt::point(fx.row_a, fx.col_a);
    CHECK(loaded->predict_mask(fx.image, prompt).v == seg->predict_mask(fx.image, prompt).v);
    CHECK(loaded->predict_mask(fx.image, prompt).v == loaded->predict_mask(fx.image, prompt).v);

    CHECK_THROWS_WITH_AS(
        load_external_segmenter({"patch_attn", (dir / "missing.seg1").string(), "cpu"}),
        doctest::Contains("missing.seg1"), IoError);
    CHECK_THROWS_AS(load_external_segmenter({"sam_vit_b", path, "cpu"}), ConfigError);
    CHECK_THROWS_AS(load_external_segmenter({"mystery_model", path, "cpu"}), ConfigError);
    CHECK_THROWS_AS(load_external_segmenter({"patch_attn", path, "cuda"}), ConfigError);

    // truncated checkpoint
    std::string trunc = (dir / "trunc.seg1").string();
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out(trunc, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_external_segmenter({"patch_attn", trunc, "cpu"}), FormatError);
}

TEST_SUITE_END();
