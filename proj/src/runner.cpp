#include "uap/runner.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "uap/corpus.hpp"
#include "uap/errors.hpp"
#include "uap/membank.hpp"
#include "uap/rng.hpp"
#include "uap/uap_io.hpp"

namespace fs = std::filesystem;

namespace uap {

namespace {

std::string prompt_kind_name(PromptKind kind) {
    return kind == PromptKind::point ? "point" : "box";
}

PromptKind prompt_kind_from_name(const std::string& name) {
    if (name == "point") return PromptKind::point;
    if (name == "box") return PromptKind::box;
    throw ConfigError("unknown prompt kind: '" + name + "'");
}

std::string digest_of(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string canonical_or_empty(const std::string& dir) {
    if (dir.empty()) return {};
    std::error_code ec;
    fs::path p = fs::canonical(dir, ec);
    return ec ? std::string{} : p.string();
}

void write_config_snapshot(const RunConfig& config, const std::string& out_dir) {
    nlohmann::json j = run_config_to_json(config);
    j["config_digest"] = digest_of(j.dump());
    std::ofstream os(out_dir + "/config.json", std::ios::binary);
    if (!os) throw IoError("cannot write config snapshot under " + out_dir);
    os << j.dump(2) << "\n";
}

// Test images must not be reachable from the directories a UAP or bank was
// built from (resolved file identity, not just path strings).
void ensure_disjoint_from_bank(const ImageSource& test, const MemoryBank& bank) {
    std::set<std::string> bank_files(bank.source_ids.begin(), bank.source_ids.end());
    for (size_t i = 0; i < test.size(); ++i) {
        const std::string& p = test.canonical_path(i);
        if (!p.empty() && bank_files.count(p))
            throw ConfigError("test corpus shares image with the memory bank: " + p);
    }
}

void write_baseline_loss_csv(const std::vector<BaselineTraceRow>& trace, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write loss trace: " + path);
    os << "iteration,loss\n";
    char buf[64];
    for (const BaselineTraceRow& row : trace) {
        std::snprintf(buf, sizeof buf, "%.12g", row.loss);
        os << row.iteration << "," << buf << "\n";
    }
}

void write_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j = {
        {"miou_percent", report.miou_percent},
        {"pairs", report.per_image.size()},
        {"config_digest", report.config_digest},
        {"uap_meta", report.uap_meta},
    };
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write report json: " + path);
    os << j.dump(2) << "\n";
}

std::string bank_dirs_of(const MemoryBank& bank) {
    std::set<std::string> dirs;
    for (const std::string& id : bank.source_ids) {
        fs::path p(id);
        if (p.is_absolute()) dirs.insert(p.parent_path().string());
    }
    std::string joined;
    for (const std::string& d : dirs) {
        if (!joined.empty()) joined += ";";
        joined += d;
    }
    return joined;
}

}  // namespace

nlohmann::json run_config_to_json(const RunConfig& config) {
    return nlohmann::json{
        {"command", config.command},
        {"encoder", config.encoder_spec},
        {"device", config.device},
        {"bank", config.bank_path},
        {"uap", config.uap_path},
        {"out", config.out_dir},
        {"corpus", config.corpus_dir},
        {"aug_corpus", config.aug_corpus_dir},
        {"train_corpus", config.train_corpus_dir},
        {"test_corpus", config.test_corpus_dir},
        {"images", config.images_dir},
        {"m", config.bank_m},
        {"image_index", config.image_index},
        {"tau", config.cl.tau},
        {"k", config.cl.k},
        {"aug", to_string(config.cl.augment.kind)},
        {"weight", config.cl.augment.weight},
        {"aug_rows", config.cl.augment.rows},
        {"aug_cols", config.cl.augment.cols},
        {"magnitude", config.cl.augment.magnitude},
        {"eps", config.cl.epsilon},
        {"steps", config.cl.steps},
        {"lr", config.cl.lr},
        {"init", config.cl.init == UapInit::zeros ? "zeros" : "uniform"},
        {"seed", config.cl.seed},
        {"mode", config.baseline.mode == BaselineMode::image_dependent ? "dependent" : "agnostic"},
        {"baseline_steps", config.baseline.steps},
        {"baseline_lr", config.baseline.lr},
        {"prompts_per_image", config.baseline.prompts_per_image},
        {"target_logit", config.baseline.target_logit},
        {"n", config.eval.n_images},
        {"prompt", prompt_kind_name(config.eval.prompt_kind)},
        {"eval_prompts_per_image", config.eval.prompts_per_image},
        {"eval_seed", config.eval.seed},
        {"clamp_adv", config.eval.clamp_adv},
        {"foreground_points", config.eval.foreground_points},
        {"kind", config.sweep_kind},
        {"grid", config.sweep_grid},
    };
}

void apply_json_config(RunConfig& c, const nlohmann::json& j) {
    auto get_str = [&](const char* key, std::string& out) {
        if (j.contains(key)) out = j.at(key).get<std::string>();
    };
    get_str("command", c.command);
    get_str("encoder", c.encoder_spec);
    get_str("device", c.device);
    get_str("bank", c.bank_path);
    get_str("uap", c.uap_path);
    get_str("out", c.out_dir);
    get_str("corpus", c.corpus_dir);
    get_str("aug_corpus", c.aug_corpus_dir);
    get_str("train_corpus", c.train_corpus_dir);
    get_str("test_corpus", c.test_corpus_dir);
    get_str("images", c.images_dir);
    if (j.contains("m")) c.bank_m = j.at("m").get<int>();
    if (j.contains("image_index")) c.image_index = j.at("image_index").get<int>();
    if (j.contains("tau")) c.cl.tau = j.at("tau").get<double>();
    if (j.contains("k")) c.cl.k = j.at("k").get<int>();
    if (j.contains("aug")) c.cl.augment.kind = augment_kind_from_string(j.at("aug"));
    if (j.contains("weight")) c.cl.augment.weight = j.at("weight").get<double>();
    if (j.contains("aug_rows")) c.cl.augment.rows = j.at("aug_rows").get<int>();
    if (j.contains("aug_cols")) c.cl.augment.cols = j.at("aug_cols").get<int>();
    if (j.contains("magnitude")) c.cl.augment.magnitude = j.at("magnitude").get<double>();
    if (j.contains("eps")) c.cl.epsilon = c.baseline.epsilon = j.at("eps").get<double>();
    if (j.contains("steps")) c.cl.steps = j.at("steps").get<int>();
    if (j.contains("lr")) c.cl.lr = j.at("lr").get<double>();
    if (j.contains("init"))
        c.cl.init = j.at("init").get<std::string>() == "zeros" ? UapInit::zeros : UapInit::uniform;
    if (j.contains("seed")) {
        uint64_t s = j.at("seed").get<uint64_t>();
        c.cl.seed = c.baseline.seed = s;
    }
    if (j.contains("mode"))
        c.baseline.mode = j.at("mode").get<std::string>() == "agnostic"
                              ? BaselineMode::image_agnostic
                              : BaselineMode::image_dependent;
    if (j.contains("baseline_steps")) c.baseline.steps = j.at("baseline_steps").get<int>();
    if (j.contains("baseline_lr")) c.baseline.lr = j.at("baseline_lr").get<double>();
    if (j.contains("prompts_per_image"))
        c.baseline.prompts_per_image = j.at("prompts_per_image").get<int>();
    if (j.contains("target_logit")) c.baseline.target_logit = j.at("target_logit").get<double>();
    if (j.contains("n")) c.eval.n_images = j.at("n").get<int>();
    if (j.contains("prompt")) c.eval.prompt_kind = prompt_kind_from_name(j.at("prompt"));
    if (j.contains("eval_prompts_per_image"))
        c.eval.prompts_per_image = j.at("eval_prompts_per_image").get<int>();
    if (j.contains("eval_seed")) c.eval.seed = j.at("eval_seed").get<uint64_t>();
    if (j.contains("clamp_adv")) c.eval.clamp_adv = j.at("clamp_adv").get<bool>();
    if (j.contains("foreground_points"))
        c.eval.foreground_points = j.at("foreground_points").get<bool>();
    get_str("kind", c.sweep_kind);
    if (j.contains("grid")) c.sweep_grid = j.at("grid").get<std::vector<std::string>>();
}

SegmenterHandle make_segmenter_from_spec(const std::string& spec, const std::string& device) {
    std::string dev = device;
    if (dev.empty()) {
        const char* env = std::getenv("UAPKIT_DEVICE");
        dev = env ? env : "cpu";
    }
    if (dev != "cpu") throw ConfigError("unsupported device '" + dev + "' (only cpu is available)");

    if (spec.rfind("toy", 0) == 0 && (spec.size() == 3 || spec[3] == ':')) {
        uint64_t seed = 7;
        Shape3 in{64, 64, 3}, feat{8, 8, 16};
        if (spec.size() > 4) {
            std::string rest = spec.substr(4);
            auto parse_shape = [](const std::string& s) {
                Shape3 sh;
                if (std::sscanf(s.c_str(), "%dx%dx%d", &sh.h, &sh.w, &sh.c) != 3)
                    throw ConfigError("bad shape in encoder spec: '" + s + "'");
                return sh;
            };
            size_t p1 = rest.find(':');
            seed = std::stoull(rest.substr(0, p1));
            if (p1 != std::string::npos) {
                std::string shapes = rest.substr(p1 + 1);
                size_t p2 = shapes.find(':');
                if (p2 == std::string::npos)
                    throw ConfigError("encoder spec needs both input and feature shapes");
                in = parse_shape(shapes.substr(0, p2));
                feat = parse_shape(shapes.substr(p2 + 1));
            }
        }
        return make_toy_segmenter(seed, in, feat);
    }
    return load_external_segmenter({"patch_attn", spec, dev});
}

int run(const RunConfig& config) {
    if (config.out_dir.empty()) throw ConfigError("an output directory (--out) is required");
    SegmenterHandle segmenter = make_segmenter_from_spec(config.encoder_spec, config.device);
    const Encoder& encoder = segmenter->encoder();
    const Shape3 shape = encoder.input_shape();

    // corpus loader that records undecodable files in a manifest next to the
    // run artifacts (written lazily, after the pre-run guards pass)
    std::vector<std::pair<std::string, std::vector<std::string>>> manifests;
    auto load_corpus = [&](const std::string& dir, const char* label) {
        IngestResult result = ingest_corpus(dir, shape);
        if (!result.skipped.empty()) {
            for (const std::string& f : result.skipped)
                std::fprintf(stderr, "warning: skipped undecodable image %s/%s\n", dir.c_str(),
                             f.c_str());
            manifests.emplace_back(label, result.skipped);
        }
        return std::move(result.source);
    };
    auto write_manifests = [&]() {
        for (const auto& [label, skipped] : manifests) {
            std::ofstream os(config.out_dir + "/" + label + "_skipped.txt", std::ios::binary);
            for (const std::string& f : skipped) os << f << "\n";
        }
    };

    if (config.command == "bank") {
        ImageSource corpus = load_corpus(config.corpus_dir, "corpus");
        MemoryBank bank = build_membank(encoder, corpus, config.bank_m);
        fs::create_directories(config.out_dir);
        save_membank(bank, config.out_dir + "/bank.mbk");
        write_manifests();
        write_config_snapshot(config, config.out_dir);
        return 0;
    }

    if (config.command == "train-cl") {
        MemoryBank bank = load_membank(config.bank_path);
        check_bank_matches(bank, encoder);
        ImageSource aug_corpus;
        if (!config.aug_corpus_dir.empty()) aug_corpus = load_corpus(config.aug_corpus_dir, "aug_corpus");
        CLTrainResult result = train_uap_cl(encoder, aug_corpus, bank, config.cl);
        result.uap.meta["aug_corpus_dir"] = canonical_or_empty(config.aug_corpus_dir);
        result.uap.meta["bank_corpus_dirs"] = bank_dirs_of(bank);
        fs::create_directories(config.out_dir);
        save_uap(result.uap, config.out_dir + "/uap.uap1");
        write_loss_csv(result.trace, config.out_dir + "/loss.csv");
        write_manifests();
        write_config_snapshot(config, config.out_dir);
        return 0;
    }

    if (config.command == "train-baseline") {
        ImageSource corpus = load_corpus(config.train_corpus_dir, "train_corpus");
        BaselineTrainResult result;
        if (config.baseline.mode == BaselineMode::image_dependent) {
            if (config.image_index < 0 || static_cast<size_t>(config.image_index) >= corpus.size())
                throw ConfigError("image_index outside the training corpus");
            // frozen seeded prompts, clean masks computed once up front
            Rng rng = Rng::stream(config.baseline.seed, 3);
            std::vector<Prompt> prompts;
            for (int p = 0; p < config.baseline.prompts_per_image; ++p)
                prompts.push_back(Prompt::point(static_cast<int>(rng.below(shape.h)),
                                                static_cast<int>(rng.below(shape.w))));
            result = attack_image_dependent(*segmenter, corpus.image(config.image_index), prompts,
                                            config.baseline);
            result.uap.meta["image_id"] = corpus.id(config.image_index);
        } else {
            result = attack_image_agnostic(*segmenter, corpus, config.baseline);
        }
        result.uap.meta["train_corpus_dir"] = canonical_or_empty(config.train_corpus_dir);
        fs::create_directories(config.out_dir);
        save_uap(result.uap, config.out_dir + "/uap.uap1");
        write_baseline_loss_csv(result.trace, config.out_dir + "/loss.csv");
        write_manifests();
        write_config_snapshot(config, config.out_dir);
        return 0;
    }

    if (config.command == "eval") {
        Uap uap = load_uap(config.uap_path);
        ImageSource test = load_corpus(config.test_corpus_dir, "test_corpus");
        EvalReport report = evaluate_uap(*segmenter, uap, test, config.eval);
        fs::create_directories(config.out_dir);
        write_report_csv(report, config.out_dir + "/report.csv");
        write_report_json(report, config.out_dir + "/report.json");
        write_manifests();
        write_config_snapshot(config, config.out_dir);
        std::printf("miou_percent=%.2f over %zu pairs\n", report.miou_percent,
                    report.per_image.size());
        return 0;
    }

    if (config.command == "sweep") {
        MemoryBank bank = load_membank(config.bank_path);
        check_bank_matches(bank, encoder);
        ImageSource aug_corpus;
        if (!config.aug_corpus_dir.empty()) aug_corpus = load_corpus(config.aug_corpus_dir, "aug_corpus");
        ImageSource test = load_corpus(config.test_corpus_dir, "test_corpus");
        ensure_disjoint_from_bank(test, bank);
        if (corpus_overlaps_dirs(test, {canonical_or_empty(config.aug_corpus_dir)}))
            throw ConfigError("test corpus overlaps the augmentation corpus");

        SweepKind kind = sweep_kind_from_string(config.sweep_kind);
        std::vector<std::string> grid =
            config.sweep_grid.empty() ? default_sweep_grid(kind) : config.sweep_grid;
        SweepInputs inputs;
        inputs.segmenter = segmenter.get();
        inputs.bank = &bank;
        inputs.aug_corpus = &aug_corpus;
        inputs.test_corpus = &test;
        inputs.base = config.cl;
        inputs.eval = config.eval;
        inputs.out_dir = config.out_dir;
        fs::create_directories(config.out_dir);
        SweepTable table = run_sweep(kind, grid, inputs);
        write_sweep_csv(table, config.out_dir + "/sweep.csv");
        if (!write_sweep_svg(table, config.out_dir + "/sweep.svg"))
            std::fprintf(stderr, "warning: sweep plot not written; CSV only\n");
        write_manifests();
        write_config_snapshot(config, config.out_dir);
        for (const SweepCell& cell : table.cells)
            if (!cell.ok)
                std::fprintf(stderr, "cell '%s' failed: %s\n", cell.setting.c_str(),
                             cell.error.c_str());
        return table.all_ok ? 0 : 3;
    }

    if (config.command == "analyze") {
        Uap uap = load_uap(config.uap_path);
        ImageSource corpus = load_corpus(config.corpus_dir, "corpus");
        CosineAnalysis analysis = cosine_analysis(encoder, uap, corpus, config.cl.augment.weight,
                                                  config.eval.seed);
        fs::create_directories(config.out_dir);
        std::ofstream os(config.out_dir + "/cosine.csv", std::ios::binary);
        if (!os) throw IoError("cannot write cosine.csv under " + config.out_dir);
        char buf[64];
        os << "pair,similarity\n";
        auto row = [&](const char* name, double v) {
            std::snprintf(buf, sizeof buf, "%.6f", v);
            os << name << "," << buf << "\n";
        };
        row("positive", analysis.positive_pair);
        row("negative", analysis.negative_pair);
        row("adv_clean", analysis.adv_clean_pair);
        row("random", analysis.random_pair);
        os.close();
        write_manifests();
        write_config_snapshot(config, config.out_dir);
        std::printf("positive=%.4f negative=%.4f adv_clean=%.4f random=%.4f\n",
                    analysis.positive_pair, analysis.negative_pair, analysis.adv_clean_pair,
                    analysis.random_pair);
        return 0;
    }

    if (config.command == "overlay") {
        Uap uap = load_uap(config.uap_path);
        ImageSource images = load_corpus(config.images_dir, "images");
        size_t n = std::min<size_t>(config.eval.n_images, images.size());
        images = images.prefix(n);
        Rng rng(config.eval.seed);
        std::vector<Prompt> prompts;
        for (int p = 0; p < config.eval.prompts_per_image; ++p) {
            if (config.eval.prompt_kind == PromptKind::point) {
                prompts.push_back(Prompt::point(static_cast<int>(rng.below(shape.h)),
                                                static_cast<int>(rng.below(shape.w))));
            } else {
                int hr = shape.h / 8 + static_cast<int>(rng.below(shape.h / 4));
                int hc = shape.w / 8 + static_cast<int>(rng.below(shape.w / 4));
                int cr = hr + static_cast<int>(rng.below(shape.h - 2 * hr));
                int cc = hc + static_cast<int>(rng.below(shape.w - 2 * hc));
                prompts.push_back(Prompt::box(cr - hr, cc - hc, cr + hr, cc + hc));
            }
        }
        emit_overlays(*segmenter, uap, images, prompts, config.out_dir, config.eval.clamp_adv);
        write_manifests();
        write_config_snapshot(config, config.out_dir);
        return 0;
    }

    throw ConfigError("unknown command: '" + config.command + "'");
}

}  // namespace uap
