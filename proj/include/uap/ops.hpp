#pragma once

#include "uap/tensor.hpp"

namespace uap {

// Elementwise clamp of a perturbation to the L-inf ball of radius epsilon.
// Idempotent. Throws InvalidValueError on non-finite input.
Array3 linf_project(const Array3& delta, double epsilon);

// Clamp pixel values to [0,1] so an adversarial image stays a valid image.
ImageTensor clamp_pixels(const ImageTensor& image);

// mask[i,j] = logits[i,j] > 0 (strictly; zero stays unmasked).
BinaryMask binarize_mask(const MaskLogits& logits);

// |a n b| / |a u b|. Both masks empty -> 1.0 (perfect agreement);
// exactly one empty -> 0.0. Throws ContractError on shape mismatch.
double iou(const BinaryMask& a, const BinaryMask& b);

// Unit-norm copy of vec. Throws DegenerateInputError on the zero vector.
Embedding l2_normalize(const std::vector<double>& vec);

// Dot product of two normalized embeddings. Throws ContractError if either
// input is not marked/actually normalized.
double cosine_similarity(const Embedding& a, const Embedding& b);

}  // namespace uap
