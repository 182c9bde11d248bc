#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "uap/baseline_attack.hpp"
#include "uap/cl_attack.hpp"
#include "uap/encoders.hpp"
#include "uap/eval.hpp"

namespace uap {

// Resolved configuration for one CLI run. Every flag has a config-file
// equivalent (same key names); flags override file values.
struct RunConfig {
    std::string command;  // bank|train-cl|train-baseline|eval|sweep|analyze|overlay

    std::string encoder_spec = "toy:7";  // "toy[:seed[:HxWxC:hxwxd]]" or a SEG1 path
    std::string device;                  // empty -> $UAPKIT_DEVICE or "cpu"

    std::string bank_path;
    std::string uap_path;
    std::string out_dir;
    std::string corpus_dir;        // bank / analyze
    std::string aug_corpus_dir;    // train-cl / sweep
    std::string train_corpus_dir;  // train-baseline
    std::string test_corpus_dir;   // eval / sweep
    std::string images_dir;        // overlay

    int bank_m = 100;
    int image_index = 0;  // train-baseline dependent: which corpus image to attack

    CLConfig cl;
    BaselineConfig baseline;
    EvalConfig eval;

    std::string sweep_kind = "augmentation";
    std::vector<std::string> sweep_grid;  // empty -> default grid for the kind
};

nlohmann::json run_config_to_json(const RunConfig& config);
void apply_json_config(RunConfig& config, const nlohmann::json& j);

// "toy[:seed[:HxWxC:hxwxd]]" builds a seeded toy segmenter; anything else is
// treated as a SEG1 checkpoint path.
SegmenterHandle make_segmenter_from_spec(const std::string& spec, const std::string& device);

// Dispatches one command, writes artifacts and a config.json snapshot under
// out_dir. Returns the process exit status (0 success, 3 partial sweep
// failure). Throws on configuration/contract errors.
int run(const RunConfig& config);

}  // namespace uap
