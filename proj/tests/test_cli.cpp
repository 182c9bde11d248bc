#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "test_helpers.hpp"
#include "uap/errors.hpp"
#include "uap/fixtures.hpp"
#include "uap/runner.hpp"
#include "uap/uap_io.hpp"

using namespace uap;

TEST_SUITE_BEGIN("cli");

namespace {

namespace fs = std::filesystem;

std::string fresh_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / "uapkit_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

}  // namespace

TEST_CASE("encoder spec parsing") {
    SegmenterHandle toy = make_segmenter_from_spec("toy", "");
    CHECK(toy->encoder().input_shape() == Shape3{64, 64, 3});
    SegmenterHandle seeded = make_segmenter_from_spec("toy:9", "cpu");
    CHECK(seeded->encoder().fingerprint() != toy->encoder().fingerprint());
    SegmenterHandle shaped = make_segmenter_from_spec("toy:9:32x32x3:4x4x8", "cpu");
    CHECK(shaped->encoder().input_shape() == Shape3{32, 32, 3});
    CHECK(shaped->encoder().feature_shape() == Shape3{4, 4, 8});

    CHECK_THROWS_AS(make_segmenter_from_spec("toy:9:32x32:4x4x8", "cpu"), ConfigError);
    CHECK_THROWS_AS(make_segmenter_from_spec("toy", "tpu"), ConfigError);
    CHECK_THROWS_AS(make_segmenter_from_spec("/nope/model.seg1", "cpu"), IoError);
}

TEST_CASE("config json round trip and override semantics") {
    RunConfig base;
    base.command = "train-cl";
    base.cl.tau = 0.25;
    base.cl.steps = 123;
    base.cl.augment.kind = AugmentKind::cutout;
    base.eval.prompt_kind = PromptKind::box;
    nlohmann::json j = run_config_to_json(base);

    RunConfig restored;
    apply_json_config(restored, j);
    CHECK(restored.command == "train-cl");
    CHECK(restored.cl.tau == 0.25);
    CHECK(restored.cl.steps == 123);
    CHECK(restored.cl.augment.kind == AugmentKind::cutout);
    CHECK(restored.eval.prompt_kind == PromptKind::box);

    // later values override earlier ones, like flags over a config file
    apply_json_config(restored, nlohmann::json{{"tau", 0.5}});
    CHECK(restored.cl.tau == 0.5);
    CHECK(restored.cl.steps == 123);
}

TEST_CASE("full pipeline through run(): bank, train, eval, analyze, overlay, sweep") {
    std::string root = fresh_dir("pipeline");
    std::string bank_corpus = root + "/bank_corpus";
    std::string aug_corpus = root + "/aug_corpus";
    std::string test_corpus = root + "/test_corpus";
    write_synthetic_corpus(bank_corpus, 200, 24);
    write_synthetic_corpus(aug_corpus, 100, 8);
    write_synthetic_corpus(test_corpus, 300, 6);

    std::ofstream(bank_corpus + "/broken.ppm") << "not an image";

    RunConfig bank;
    bank.command = "bank";
    bank.corpus_dir = bank_corpus;
    bank.bank_m = 24;
    bank.out_dir = root + "/bank";
    REQUIRE(run(bank) == 0);
    REQUIRE(fs::exists(root + "/bank/bank.mbk"));
    REQUIRE(fs::exists(root + "/bank/config.json"));
    // the undecodable file lands in the manifest, not the bank
    REQUIRE(fs::exists(root + "/bank/corpus_skipped.txt"));
    {
        std::ifstream manifest(root + "/bank/corpus_skipped.txt");
        std::string line;
        std::getline(manifest, line);
        CHECK(line == "broken.ppm");
    }

    RunConfig train;
    train.command = "train-cl";
    train.bank_path = root + "/bank/bank.mbk";
    train.aug_corpus_dir = aug_corpus;
    train.out_dir = root + "/train";
    train.cl.steps = 12;
    train.cl.k = 8;
    train.cl.seed = 17;
    REQUIRE(run(train) == 0);
    REQUIRE(fs::exists(root + "/train/uap.uap1"));
    REQUIRE(fs::exists(root + "/train/loss.csv"));
    REQUIRE(fs::exists(root + "/train/config.json"));

    Uap trained = load_uap(root + "/train/uap.uap1");
    CHECK(trained.meta.at("method") == "cl_infonce");
    CHECK_FALSE(trained.meta.at("aug_corpus_dir").empty());

    RunConfig eval_cfg;
    eval_cfg.command = "eval";
    eval_cfg.uap_path = root + "/train/uap.uap1";
    eval_cfg.test_corpus_dir = test_corpus;
    eval_cfg.out_dir = root + "/eval";
    eval_cfg.eval.seed = 5;
    REQUIRE(run(eval_cfg) == 0);
    REQUIRE(fs::exists(root + "/eval/report.csv"));
    REQUIRE(fs::exists(root + "/eval/report.json"));

    // evaluating on the training corpus must refuse before writing outputs
    RunConfig cheat = eval_cfg;
    cheat.test_corpus_dir = aug_corpus;
    cheat.out_dir = root + "/eval_cheat";
    CHECK_THROWS_AS(run(cheat), ConfigError);
    CHECK_FALSE(fs::exists(root + "/eval_cheat/report.csv"));

    RunConfig analyze;
    analyze.command = "analyze";
    analyze.uap_path = root + "/train/uap.uap1";
    analyze.corpus_dir = test_corpus;
    analyze.out_dir = root + "/analyze";
    REQUIRE(run(analyze) == 0);
    REQUIRE(fs::exists(root + "/analyze/cosine.csv"));

    RunConfig overlay;
    overlay.command = "overlay";
    overlay.uap_path = root + "/train/uap.uap1";
    overlay.images_dir = test_corpus;
    overlay.out_dir = root + "/overlay";
    overlay.eval.n_images = 2;
    overlay.eval.prompts_per_image = 1;
    REQUIRE(run(overlay) == 0);
    int panels = 0;
    for (const auto& entry : fs::directory_iterator(root + "/overlay"))
        if (entry.path().extension() == ".ppm") ++panels;
    CHECK(panels == 2);

    RunConfig sweep;
    sweep.command = "sweep";
    sweep.bank_path = root + "/bank/bank.mbk";
    sweep.aug_corpus_dir = aug_corpus;
    sweep.test_corpus_dir = test_corpus;
    sweep.sweep_kind = "temperature";
    sweep.sweep_grid = {"0.05", "0.1", "0.5"};
    sweep.cl.steps = 6;
    sweep.cl.k = 8;
    sweep.out_dir = root + "/sweep";
    REQUIRE(run(sweep) == 0);
    REQUIRE(fs::exists(root + "/sweep/sweep.csv"));
    REQUIRE(fs::exists(root + "/sweep/sweep.svg"));

    std::ifstream csv(root + "/sweep/sweep.csv");
    int lines = 0;
    std::string line;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == 4);  // header + 3 cells
}

TEST_CASE("train-baseline through run() in both modes") {
    std::string root = fresh_dir("baseline");
    std::string train_corpus = root + "/train_corpus";
    write_synthetic_corpus(train_corpus, 100, 4);

    RunConfig dep;
    dep.command = "train-baseline";
    dep.train_corpus_dir = train_corpus;
    dep.baseline.mode = BaselineMode::image_dependent;
    dep.baseline.steps = 8;
    dep.out_dir = root + "/dep";
    REQUIRE(run(dep) == 0);
    Uap udep = load_uap(root + "/dep/uap.uap1");
    CHECK(udep.meta.at("method") == "baseline_image_dependent");

    RunConfig agn = dep;
    agn.baseline.mode = BaselineMode::image_agnostic;
    agn.out_dir = root + "/agn";
    REQUIRE(run(agn) == 0);
    Uap uagn = load_uap(root + "/agn/uap.uap1");
    CHECK(uagn.meta.at("method") == "baseline_image_agnostic");

    RunConfig bad = dep;
    bad.image_index = 99;
    bad.out_dir = root + "/bad";
    CHECK_THROWS_AS(run(bad), ConfigError);
}

TEST_CASE("sweep refuses overlapping test and bank corpora") {
    std::string root = fresh_dir("overlap");
    std::string corpus = root + "/corpus";
    write_synthetic_corpus(corpus, 100, 8);

    RunConfig bank;
    bank.command = "bank";
    bank.corpus_dir = corpus;
    bank.bank_m = 8;
    bank.out_dir = root + "/bank";
    REQUIRE(run(bank) == 0);

    RunConfig sweep;
    sweep.command = "sweep";
    sweep.bank_path = root + "/bank/bank.mbk";
    sweep.aug_corpus_dir = corpus;
    sweep.test_corpus_dir = corpus;  // same files as the bank
    sweep.sweep_kind = "temperature";
    sweep.sweep_grid = {"0.1"};
    sweep.cl.steps = 2;
    sweep.out_dir = root + "/sweep";
    CHECK_THROWS_AS(run(sweep), ConfigError);
}

TEST_CASE("identical seeds reproduce byte-identical artifacts") {
    std::string root = fresh_dir("determinism");
    std::string bank_corpus = root + "/bank_corpus";
    std::string aug_corpus = root + "/aug_corpus";
    write_synthetic_corpus(bank_corpus, 200, 12);
    write_synthetic_corpus(aug_corpus, 100, 6);

    RunConfig bank;
    bank.command = "bank";
    bank.corpus_dir = bank_corpus;
    bank.bank_m = 12;
    bank.out_dir = root + "/bank";
    REQUIRE(run(bank) == 0);

    auto train_once = [&](const char* out) {
        RunConfig train;
        train.command = "train-cl";
        train.bank_path = root + "/bank/bank.mbk";
        train.aug_corpus_dir = aug_corpus;
        train.out_dir = root + "/" + out;
        train.cl.steps = 10;
        train.cl.k = 6;
        train.cl.seed = 77;
        REQUIRE(run(train) == 0);
        std::ifstream is(root + "/" + out + "/uap.uap1", std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(is)), {});
    };
    CHECK(train_once("t1") == train_once("t2"));
}

TEST_SUITE_END();
