#pragma once

#include <memory>
#include <string>

#include "uap/tensor.hpp"

namespace uap {

// Frozen differentiable image encoder. encode is deterministic given the
// parameters; parameters are never updated by any attack. encode_vjp is the
// vector-Jacobian product: the gradient of sum(grad_feature .* encode(image))
// with respect to the image.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual Shape3 input_shape() const = 0;
    virtual Shape3 feature_shape() const = 0;
    virtual FeatureMap encode(const ImageTensor& image) const = 0;
    virtual ImageTensor encode_vjp(const ImageTensor& image,
                                   const FeatureMap& grad_feature) const = 0;
    // Checksum over parameters and feature shape; memory banks are keyed on it.
    virtual std::string fingerprint() const = 0;
};

// Prompt-conditioned mask predictor over a frozen encoder.
class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual const Encoder& encoder() const = 0;
    virtual MaskLogits predict_mask(const ImageTensor& image, const Prompt& prompt) const = 0;
    virtual ImageTensor predict_mask_vjp(const ImageTensor& image, const Prompt& prompt,
                                         const MaskLogits& grad_logits) const = 0;
};

using EncoderHandle = std::shared_ptr<const Encoder>;
using SegmenterHandle = std::shared_ptr<const Segmenter>;

// Row-major flattening of a feature map followed by L2 normalization.
// Throws DegenerateInputError on an all-zero feature map.
Embedding embed(const FeatureMap& fm);

// Gradient of sum(grad_embedding .* embed(fm)) with respect to fm.
FeatureMap embed_vjp(const FeatureMap& fm, const std::vector<double>& grad_embedding);

// Patch-grid segmenter. Encoder: patchify -> per-patch standardization ->
// linear map -> tanh -> one global self-attention mixing stage -> tanh,
// giving a d-channel feature map. The attention stage makes token features
// content-adaptive the way ViT blocks are: structured inputs yield diverse
// tokens while unstructured inputs collapse toward the token average (a
// purely local block cannot reproduce prompt-segmentation attack dynamics).
// Decoder: each pixel is scored by cosine similarity between its bilinearly
// upsampled feature and the feature at the prompt location (point) or the
// mean feature inside the box, scaled and shifted by fixed constants. The
// constants below are the frozen reference configuration: clean masks on
// the synthetic fixtures are neither empty nor full, and finite-difference
// gradient checks pass in double precision.
struct PatchSegmenterParams {
    Shape3 input_shape{64, 64, 3};
    Shape3 feature_shape{8, 8, 16};
    double tanh_gain = 3.0;
    double mix_gain = 1.5;
    double sim_scale = 10.0;
    double sim_bias = 5.6;
    std::vector<double> weight;      // [patch_dim x d], row-major
    std::vector<double> bias;        // [d]
    std::vector<double> attn_query;  // [d x d], row-major
    std::vector<double> attn_key;    // [d x d]
    std::vector<double> attn_value;  // [d x d]
    std::vector<double> mix_bias;    // [d]
};

class PatchSegmenter final : public Segmenter {
public:
    explicit PatchSegmenter(PatchSegmenterParams params);

    const Encoder& encoder() const override;
    MaskLogits predict_mask(const ImageTensor& image, const Prompt& prompt) const override;
    ImageTensor predict_mask_vjp(const ImageTensor& image, const Prompt& prompt,
                                 const MaskLogits& grad_logits) const override;

    PatchSegmenterParams params() const;
    EncoderHandle encoder_handle() const;

private:
    std::shared_ptr<const class PatchEncoder> encoder_;
    double sim_scale_;
    double sim_bias_;
};

// Seeded random instance of the patch segmenter. Feature grid must tile the
// input (h | H, w | W); throws ContractError otherwise.
std::shared_ptr<const PatchSegmenter> make_toy_segmenter(
    uint64_t seed, Shape3 input_shape = {64, 64, 3}, Shape3 feature_shape = {8, 8, 16});

// Local checkpoint descriptor. No network access; device selection is "cpu".
struct ModelDescriptor {
    std::string variant;  // "patch_attn" is loadable; SAM variants need export
    std::string checkpoint_path;
    std::string device = "cpu";
};

// Loads a segmenter checkpoint (SEG1 container). Missing/corrupt files raise
// IoError/FormatError naming the path; unsupported variants or devices raise
// ConfigError.
SegmenterHandle load_external_segmenter(const ModelDescriptor& desc);

// SEG1 export of a patch segmenter; load_external_segmenter round-trips it.
void save_segmenter(const PatchSegmenter& seg, const std::string& path);

}  // namespace uap
