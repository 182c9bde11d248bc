#pragma once

#include <vector>

#include "uap/corpus.hpp"
#include "uap/encoders.hpp"
#include "uap/tensor.hpp"

namespace uap {

enum class BaselineMode { image_dependent, image_agnostic };

struct BaselineConfig {
    double epsilon = 10.0 / 255.0;
    int steps = 300;
    double lr = 2e-2;
    BaselineMode mode = BaselineMode::image_dependent;
    int prompts_per_image = 1;
    double target_logit = -10.0;
    uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
};

struct MaskRemovalLoss {
    double loss;
    bool empty_mask_warning;  // clean mask had no pixels; loss is 0
    MaskLogits grad;          // dLoss / d adv_logits
};

// Squared hinge over the pixels of the frozen clean mask: mean of
// max(adv_logit - target_logit, 0)^2. Saturates once every formerly-masked
// logit is at or below the target.
MaskRemovalLoss mask_removal_loss(const MaskLogits& adv_logits, const BinaryMask& clean_mask,
                                  double target_logit);

struct BaselineTraceRow {
    int iteration;
    double loss;
};

struct BaselineTrainResult {
    Uap uap;
    std::vector<BaselineTraceRow> trace;
};

// Supervised mask-removal attack on a single image. When `prompts` is
// nonempty the clean masks for those prompts are computed once up front and
// frozen; when empty, one fresh seeded point prompt is drawn per iteration
// (the same policy the image-agnostic variant uses).
BaselineTrainResult attack_image_dependent(const Segmenter& segmenter, const ImageTensor& image,
                                           const std::vector<Prompt>& prompts,
                                           const BaselineConfig& config);

// Universal variant: each iteration rotates to the next training image
// (round-robin over a seeded shuffle) and attacks its clean mask.
BaselineTrainResult attack_image_agnostic(const Segmenter& segmenter,
                                          const ImageSource& train_corpus,
                                          const BaselineConfig& config);

}  // namespace uap
