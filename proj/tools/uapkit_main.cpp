// uapkit: universal adversarial perturbation toolkit for prompt-guided
// segmenters. Subcommands: bank, train-cl, train-baseline, eval, sweep,
// analyze, overlay.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uap/errors.hpp"
#include "uap/runner.hpp"

namespace {

// --config JSON is applied before flag parsing so flags override the file.
void preload_config(int argc, char** argv, uap::RunConfig& config) {
    for (int i = 1; i < argc - 1; ++i) {
        std::string arg = argv[i];
        if (arg == "--config") {
            std::ifstream is(argv[i + 1]);
            if (!is) throw uap::IoError(std::string("cannot open config file: ") + argv[i + 1]);
            nlohmann::json j;
            try {
                is >> j;
            } catch (const nlohmann::json::exception& e) {
                throw uap::FormatError(std::string("bad config file: ") + e.what());
            }
            uap::apply_json_config(config, j);
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    uap::RunConfig config;
    try {
        preload_config(argc, argv, config);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }

    CLI::App app{"universal adversarial perturbation toolkit"};
    app.require_subcommand(1);
    std::string config_file;
    app.add_option("--config", config_file, "JSON config file (flags override it)")
        ->expected(1);

    std::string prompt = config.eval.prompt_kind == uap::PromptKind::box ? "box" : "point";
    std::string aug = to_string(config.cl.augment.kind);
    std::string mode =
        config.baseline.mode == uap::BaselineMode::image_agnostic ? "agnostic" : "dependent";
    std::string init = config.cl.init == uap::UapInit::zeros ? "zeros" : "uniform";
    uint64_t seed = config.cl.seed;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--encoder", config.encoder_spec,
                        "toy[:seed[:HxWxC:hxwxd]] or SEG1 checkpoint path");
        cmd->add_option("--device", config.device, "compute device (cpu)");
        cmd->add_option("--out", config.out_dir, "output directory")->required();
    };

    CLI::App* bank = app.add_subcommand("bank", "precompute negative embeddings");
    add_common(bank);
    bank->add_option("--corpus", config.corpus_dir, "image directory")->required();
    bank->add_option("--m", config.bank_m, "number of bank rows");

    CLI::App* train_cl = app.add_subcommand("train-cl", "contrastive UAP optimization");
    add_common(train_cl);
    train_cl->add_option("--bank", config.bank_path, "memory bank file")->required();
    train_cl->add_option("--aug-corpus", config.aug_corpus_dir,
                         "corpus for the add_image augmentation");
    train_cl->add_option("--aug", aug, "augmentation kind");
    train_cl->add_option("--weight", config.cl.augment.weight, "add_image weight");
    train_cl->add_option("--magnitude", config.cl.augment.magnitude, "noise/shift magnitude");
    train_cl->add_option("--tau", config.cl.tau, "InfoNCE temperature");
    train_cl->add_option("--k", config.cl.k, "negatives per step (0 = whole bank)");
    train_cl->add_option("--eps", config.cl.epsilon, "L-inf budget");
    train_cl->add_option("--steps", config.cl.steps, "optimization steps");
    train_cl->add_option("--lr", config.cl.lr, "Adam learning rate");
    train_cl->add_option("--init", init, "uap init: zeros|uniform");
    train_cl->add_option("--seed", seed, "run seed");

    CLI::App* train_b = app.add_subcommand("train-baseline", "image-centric mask-removal attack");
    add_common(train_b);
    train_b->add_option("--mode", mode, "dependent|agnostic");
    train_b->add_option("--train-corpus", config.train_corpus_dir, "training images")->required();
    train_b->add_option("--image-index", config.image_index, "image to attack (dependent mode)");
    train_b->add_option("--steps", config.baseline.steps, "optimization steps");
    train_b->add_option("--lr", config.baseline.lr, "Adam learning rate");
    train_b->add_option("--eps", config.baseline.epsilon, "L-inf budget");
    train_b->add_option("--prompts-per-image", config.baseline.prompts_per_image,
                        "prompts per image visit");
    train_b->add_option("--target-logit", config.baseline.target_logit, "hinge target");
    train_b->add_option("--seed", seed, "run seed");

    CLI::App* eval_cmd = app.add_subcommand("eval", "mIoU protocol for a saved UAP");
    add_common(eval_cmd);
    eval_cmd->add_option("--uap", config.uap_path, "UAP1 file")->required();
    eval_cmd->add_option("--test-corpus", config.test_corpus_dir, "held-out images")->required();
    eval_cmd->add_option("--n", config.eval.n_images, "number of test images");
    eval_cmd->add_option("--prompt", prompt, "point|box");
    eval_cmd->add_option("--prompts-per-image", config.eval.prompts_per_image,
                         "prompts per image");
    eval_cmd->add_option("--seed", config.eval.seed, "prompt sampling seed");
    eval_cmd->add_flag("--no-clamp", [&](int64_t) { config.eval.clamp_adv = false; },
                       "skip [0,1] clamping of adversarial images");
    eval_cmd->add_flag("--foreground",
                       [&](int64_t) { config.eval.foreground_points = true; },
                       "sample point prompts over bright pixels only");

    CLI::App* sweep = app.add_subcommand("sweep", "ablation sweep (train + eval per cell)");
    add_common(sweep);
    sweep->add_option("--kind", config.sweep_kind,
                      "augmentation|weight|temperature|negatives");
    sweep->add_option("--grid", config.sweep_grid, "cell settings")->delimiter(',');
    sweep->add_option("--bank", config.bank_path, "memory bank file")->required();
    sweep->add_option("--aug-corpus", config.aug_corpus_dir, "augmentation corpus");
    sweep->add_option("--test-corpus", config.test_corpus_dir, "held-out images")->required();
    sweep->add_option("--steps", config.cl.steps, "steps per cell");
    sweep->add_option("--lr", config.cl.lr, "Adam learning rate");
    sweep->add_option("--tau", config.cl.tau, "base temperature");
    sweep->add_option("--k", config.cl.k, "base negatives per step");
    sweep->add_option("--weight", config.cl.augment.weight, "base add_image weight");
    sweep->add_option("--n", config.eval.n_images, "test images per cell");
    sweep->add_option("--seed", seed, "cell seed policy");
    sweep->add_option("--eval-seed", config.eval.seed, "prompt sampling seed");

    CLI::App* analyze = app.add_subcommand("analyze", "cosine similarity diagnostics");
    add_common(analyze);
    analyze->add_option("--uap", config.uap_path, "UAP1 file")->required();
    analyze->add_option("--corpus", config.corpus_dir, "image directory")->required();
    analyze->add_option("--weight", config.cl.augment.weight, "positive-pair weight");
    analyze->add_option("--seed", config.eval.seed, "draw seed");

    CLI::App* overlay = app.add_subcommand("overlay", "qualitative panels");
    add_common(overlay);
    overlay->add_option("--uap", config.uap_path, "UAP1 file")->required();
    overlay->add_option("--images", config.images_dir, "image directory")->required();
    overlay->add_option("--prompt", prompt, "point|box");
    overlay->add_option("--n", config.eval.n_images, "images to render");
    overlay->add_option("--prompts-per-image", config.eval.prompts_per_image,
                        "prompts per image");
    overlay->add_option("--seed", config.eval.seed, "prompt sampling seed");

    CLI11_PARSE(app, argc, argv);

    try {
        config.command = app.get_subcommands().front()->get_name();
        config.eval.prompt_kind = prompt == "box" ? uap::PromptKind::box : uap::PromptKind::point;
        config.cl.augment.kind = uap::augment_kind_from_string(aug);
        config.baseline.mode = mode == "agnostic" ? uap::BaselineMode::image_agnostic
                                                  : uap::BaselineMode::image_dependent;
        config.cl.init = init == "zeros" ? uap::UapInit::zeros : uap::UapInit::uniform;
        config.cl.seed = config.baseline.seed = seed;
        return uap::run(config);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
