#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "test_helpers.hpp"
#include "uap/corpus.hpp"
#include "uap/errors.hpp"
#include "uap/fixtures.hpp"
#include "uap/image_io.hpp"
#include "uap/uap_io.hpp"

using namespace uap;
using namespace uap::testing;

TEST_SUITE_BEGIN("io");

namespace {

namespace fs = std::filesystem;

std::string temp_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / "uapkit_io_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

double f32(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

TEST_CASE("UAP1 round trip is bit-exact across shapes (property)") {
    std::string dir = temp_dir("uap_roundtrip");
    Rng rng(70);
    for (int trial = 0; trial < 12; ++trial) {
        Shape3 shape{1 + static_cast<int>(rng.below(9)), 1 + static_cast<int>(rng.below(9)),
                     1 + static_cast<int>(rng.below(4))};
        double eps = rng.uniform(0.01, 0.2);
        Uap v;
        v.data = Array3(shape);
        v.epsilon = eps;
        for (double& x : v.data.v) x = f32(rng.uniform(-eps * 0.999, eps * 0.999));
        v.meta = {{"seed", "5"}, {"method", "test"}};

        std::string path = dir + "/u" + std::to_string(trial) + ".uap1";
        save_uap(v, path);
        Uap loaded = load_uap(path);
        CHECK(loaded.data.v == v.data.v);
        CHECK(loaded.data.shape == shape);
        CHECK(loaded.epsilon == eps);
        CHECK(loaded.meta == v.meta);
    }
}

TEST_CASE("load_uap refuses payloads that violate the declared budget") {
    std::string dir = temp_dir("uap_violate");
    Uap v;
    v.data = Array3(2, 2, 1);
    v.epsilon = 10.0 / 255.0;
    v.data.v = {0.5, 0.0, 0.0, 0.0};  // way past epsilon
    std::string path = dir + "/bad.uap1";
    save_uap(v, path);
    CHECK_THROWS_AS(load_uap(path), FormatError);
}

TEST_CASE("hand-built minimal UAP1 file loads to the exact value") {
    std::string dir = temp_dir("uap_manual");
    std::string path = dir + "/manual.uap1";
    std::string header = R"({"shape":[1,1,1],"dtype":"f32","epsilon":0.0392156862745098})";
    {
        std::ofstream os(path, std::ios::binary);
        os.write("UAP1", 4);
        uint32_t len = static_cast<uint32_t>(header.size());
        unsigned char lenb[4] = {static_cast<unsigned char>(len),
                                 static_cast<unsigned char>(len >> 8),
                                 static_cast<unsigned char>(len >> 16),
                                 static_cast<unsigned char>(len >> 24)};
        os.write(reinterpret_cast<const char*>(lenb), 4);
        os.write(header.data(), static_cast<std::streamsize>(header.size()));
        float value = 0.01f;
        static_assert(sizeof value == 4);
        os.write(reinterpret_cast<const char*>(&value), 4);
    }
    Uap loaded = load_uap(path);
    CHECK(loaded.data.shape == Shape3{1, 1, 1});
    CHECK(loaded.data.v[0] == static_cast<double>(0.01f));
    CHECK(loaded.epsilon == 0.0392156862745098);
}

TEST_CASE("malformed UAP1 files are rejected") {
    std::string dir = temp_dir("uap_malformed");
    Uap v;
    v.data = Array3(2, 2, 3);
    v.epsilon = 0.05;
    std::string path = dir + "/ok.uap1";
    save_uap(v, path);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();

    std::string trunc = dir + "/trunc.uap1";
    std::ofstream(trunc, std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    CHECK_THROWS_AS(load_uap(trunc), FormatError);

    std::string extra = dir + "/extra.uap1";
    {
        std::ofstream os(extra, std::ios::binary);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        os.write("junk", 4);
    }
    CHECK_THROWS_AS(load_uap(extra), FormatError);

    std::string magic = dir + "/magic.uap1";
    bytes[1] = 'X';
    std::ofstream(magic, std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(load_uap(magic), FormatError);

    CHECK_THROWS_AS(load_uap(dir + "/missing.uap1"), IoError);
}

TEST_CASE("PPM write/read round trip within quantization") {
    std::string dir = temp_dir("ppm");
    BlobFixture fx = two_blob_fixture();
    std::string path = dir + "/img.ppm";
    write_image_ppm(fx.image, path);
    ImageTensor back = read_image(path);
    REQUIRE(back.shape == fx.image.shape);
    for (size_t i = 0; i < back.v.size(); ++i)
        CHECK(std::abs(back.v[i] - fx.image.v[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("PGM files decode to replicated gray channels") {
    std::string dir = temp_dir("pgm");
    std::string path = dir + "/img.pgm";
    {
        std::ofstream os(path, std::ios::binary);
        os << "P5\n# comment line\n3 2\n255\n";
        unsigned char px[6] = {0, 51, 102, 153, 204, 255};
        os.write(reinterpret_cast<const char*>(px), 6);
    }
    ImageTensor img = read_image(path);
    CHECK(img.shape == Shape3{2, 3, 3});
    CHECK(img.at(0, 1, 0) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(img.at(0, 1, 0) == img.at(0, 1, 2));
}

TEST_CASE("ingest_corpus: ordering, determinism, manifest of skipped files") {
    std::string dir = temp_dir("corpus");
    write_synthetic_corpus(dir, 7, 3);  // synth_0000..synth_0002
    std::ofstream(dir + "/aaa_broken.ppm") << "not an image";

    IngestResult result = ingest_corpus(dir, {64, 64, 3});
    CHECK(result.source.size() == 3);
    CHECK(result.skipped == std::vector<std::string>{"aaa_broken.ppm"});
    CHECK(result.source.id(0) == "synth_0000.ppm");
    CHECK(result.source.id(2) == "synth_0002.ppm");

    IngestResult again = ingest_corpus(dir, {64, 64, 3});
    for (size_t i = 0; i < 3; ++i) {
        CHECK(again.source.id(i) == result.source.id(i));
        CHECK(again.source.image(i).v == result.source.image(i).v);
    }

    std::string empty = temp_dir("corpus_empty");
    CHECK_THROWS_AS(ingest_corpus(empty, {64, 64, 3}), ConfigError);
    std::ofstream(empty + "/junk.ppm") << "garbage";
    CHECK_THROWS_AS(ingest_corpus(empty, {64, 64, 3}), ConfigError);
}

TEST_CASE("ingest resizes to the target shape") {
    std::string dir = temp_dir("corpus_resize");
    write_synthetic_corpus(dir, 8, 1, {32, 48, 3});
    IngestResult result = ingest_corpus(dir, {64, 64, 3});
    CHECK(result.source.image(0).shape == Shape3{64, 64, 3});
}

TEST_CASE("resize_bilinear is identity at the same size") {
    Rng rng(71);
    ImageTensor img = random_array({5, 7, 3}, rng, 0.0, 1.0);
    ImageTensor out = resize_bilinear(img, 5, 7);
    for (size_t i = 0; i < img.v.size(); ++i) CHECK(out.v[i] == doctest::Approx(img.v[i]).epsilon(1e-12));
}

TEST_CASE("resize_bilinear_vjp is the exact adjoint") {
    // <resize(x), y> == <x, resize_vjp(y)> for random x, y
    Rng rng(72);
    ImageTensor x = random_array({6, 9, 2}, rng);
    ImageTensor y = random_array({13, 5, 2}, rng);
    ImageTensor ax = resize_bilinear(x, 13, 5);
    ImageTensor aty = resize_bilinear_vjp(y, 6, 9);
    CHECK(dot(ax.v, y.v) == doctest::Approx(dot(x.v, aty.v)).epsilon(1e-12));
}

TEST_SUITE_END();
