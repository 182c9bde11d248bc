#pragma once

#include <string>

#include "uap/corpus.hpp"
#include "uap/rng.hpp"
#include "uap/tensor.hpp"

namespace uap {

enum class AugmentKind { crop_resize, cutout, uniform_noise, color_shift, add_image };

std::string to_string(AugmentKind kind);
AugmentKind augment_kind_from_string(const std::string& name);

struct AugmentSpec {
    AugmentKind kind = AugmentKind::add_image;
    int rows = 0, cols = 0;   // window for crop_resize / cutout
    double magnitude = 1.0;   // uniform_noise / color_shift amplitude
    double weight = 1.0;      // add_image blend weight
};

// Spec with the reference window/magnitude for a given perturbation shape
// (window is 200/1024 of each spatial extent, e.g. 13x13 at 64x64).
AugmentSpec default_augment_spec(AugmentKind kind, Shape3 uap_shape);

// One positive sample: an augmented copy of the perturbation. The output is
// a feature-space probe; it is neither re-projected to the epsilon ball nor
// clamped to [0,1]. add_image draws a fresh corpus image on every call.
Array3 apply_augmentation(const AugmentSpec& spec, const Array3& v, Rng& rng,
                          const ImageSource* corpus);

// Augmentation output plus the sampled randomness, so the training loop can
// differentiate the positive branch with respect to the perturbation.
struct AugmentDraw {
    Array3 output;
    AugmentKind kind;
    int r0 = 0, c0 = 0, rows = 0, cols = 0;  // window for crop_resize / cutout
};

AugmentDraw apply_augmentation_draw(const AugmentSpec& spec, const Array3& v, Rng& rng,
                                    const ImageSource* corpus);

// d(output)/d(v) transpose applied to grad_output.
Array3 augmentation_vjp(const AugmentDraw& draw, const Array3& grad_output);

}  // namespace uap
