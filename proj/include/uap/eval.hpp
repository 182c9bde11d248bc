#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uap/cl_attack.hpp"
#include "uap/corpus.hpp"
#include "uap/encoders.hpp"
#include "uap/membank.hpp"
#include "uap/tensor.hpp"

namespace uap {

struct EvalConfig {
    int n_images = 100;          // capped at the corpus size
    PromptKind prompt_kind = PromptKind::point;
    int prompts_per_image = 1;
    uint64_t seed = 0;
    bool clamp_adv = true;       // clamp x+v to [0,1] before inference
    bool foreground_points = false;  // sample prompts over bright pixels only
};

struct PerImageResult {
    std::string image_id;
    Prompt prompt;
    double iou_value;
};

struct EvalReport {
    double miou_percent = 0.0;   // mean IoU * 100
    std::vector<PerImageResult> per_image;
    std::string config_digest;
    std::map<std::string, std::string> uap_meta;
};

// Eq.-2 protocol: per (test image, sampled prompt), IoU between the clean
// mask and the mask of the perturbed image; identical prompts for both
// passes. v = 0 gives exactly 100.0.
EvalReport evaluate_uap(const Segmenter& segmenter, const Uap& uap, const ImageSource& test,
                        const EvalConfig& config);

// Control: a single uniform draw in [-eps, eps] evaluated the same way.
EvalReport random_noise_baseline(const Segmenter& segmenter, const ImageSource& test,
                                 const EvalConfig& config, double epsilon, uint64_t noise_seed);

// Averaged cosine similarities over seeded draws: (UAP, UAP + w*x),
// (UAP, x), (clamp(x+UAP), x), (x1, x2), all in encoder embedding space.
struct CosineAnalysis {
    double positive_pair;
    double negative_pair;
    double adv_clean_pair;
    double random_pair;
};

CosineAnalysis cosine_analysis(const Encoder& encoder, const Uap& uap, const ImageSource& corpus,
                               double weight, uint64_t seed = 0, int draws = 100);

// ---------------------------------------------------------------------------
// Ablation sweeps
// ---------------------------------------------------------------------------

enum class SweepKind { augmentation, weight, temperature, negatives };

std::string to_string(SweepKind kind);
SweepKind sweep_kind_from_string(const std::string& name);
std::vector<std::string> default_sweep_grid(SweepKind kind);

struct SweepInputs {
    const Segmenter* segmenter = nullptr;
    const MemoryBank* bank = nullptr;
    const ImageSource* aug_corpus = nullptr;
    const ImageSource* test_corpus = nullptr;
    CLConfig base;        // every cell trains with this seed policy
    EvalConfig eval;
    std::string out_dir;  // when nonempty, each cell's UAP and report persist here
};

struct SweepCell {
    std::string setting;
    double miou_percent = 0.0;
    bool ok = false;
    std::string error;
};

struct SweepTable {
    SweepKind kind;
    std::vector<SweepCell> cells;
    bool all_ok = false;
};

// Trains one fresh UAP per grid cell and evaluates it. A failing cell is
// recorded and the sweep continues.
SweepTable run_sweep(SweepKind kind, const std::vector<std::string>& grid,
                     const SweepInputs& inputs);

// ---------------------------------------------------------------------------
// Qualitative overlays
// ---------------------------------------------------------------------------

// One panel file per (image, prompt): clean image + prompt, adversarial
// image + prompt, clean mask, adversarial mask, side by side.
// Returns the emitted file paths.
std::vector<std::string> emit_overlays(const Segmenter& segmenter, const Uap& uap,
                                       const ImageSource& images,
                                       const std::vector<Prompt>& prompts,
                                       const std::string& out_dir, bool clamp_adv = true);

// ---------------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------------

// CSV schema: image_id,prompt_kind,row,col,iou (box prompts record their
// min corner). Byte-identical output for identical reports.
void write_report_csv(const EvalReport& report, const std::string& path);

// CSV schema: setting,miou_percent.
void write_sweep_csv(const SweepTable& table, const std::string& path);

// Minimal standalone SVG line chart of a sweep. Returns false (after writing
// nothing) if the table has no successful cells.
bool write_sweep_svg(const SweepTable& table, const std::string& path);

void write_loss_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace uap
