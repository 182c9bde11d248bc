#include "uap/ops.hpp"

#include <algorithm>
#include <cmath>

#include "uap/errors.hpp"

namespace uap {

Array3 linf_project(const Array3& delta, double epsilon) {
    if (!(epsilon > 0.0)) throw ContractError("linf_project: epsilon must be > 0");
    if (!delta.finite()) throw InvalidValueError("linf_project: non-finite input");
    Array3 out = delta;
    for (double& x : out.v) x = std::clamp(x, -epsilon, epsilon);
    return out;
}

ImageTensor clamp_pixels(const ImageTensor& image) {
    if (!image.finite()) throw InvalidValueError("clamp_pixels: non-finite input");
    ImageTensor out = image;
    for (double& x : out.v) x = std::clamp(x, 0.0, 1.0);
    return out;
}

BinaryMask binarize_mask(const MaskLogits& logits) {
    BinaryMask mask(logits.h, logits.w);
    for (size_t i = 0; i < logits.v.size(); ++i) mask.v[i] = logits.v[i] > 0.0 ? 1 : 0;
    return mask;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w)
        throw ContractError("iou: mask shapes differ (" + std::to_string(a.h) + "x" +
                            std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                            std::to_string(b.w) + ")");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        bool pa = a.v[i] != 0, pb = b.v[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    if (uni == 0) return 1.0;  // both empty: masks agree
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Embedding l2_normalize(const std::vector<double>& vec) {
    double sq = 0.0;
    for (double x : vec) sq += x * x;
    double norm = std::sqrt(sq);
    if (!(norm > 0.0)) throw DegenerateInputError("l2_normalize: zero vector");
    Embedding e;
    e.v.resize(vec.size());
    for (size_t i = 0; i < vec.size(); ++i) e.v[i] = vec[i] / norm;
    e.normalized = true;
    return e;
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
    if (!a.normalized || !b.normalized)
        throw ContractError("cosine_similarity: inputs must be normalized");
    if (a.v.size() != b.v.size())
        throw ContractError("cosine_similarity: dimension mismatch");
    double dot = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) dot += a.v[i] * b.v[i];
    return std::clamp(dot, -1.0, 1.0);
}

}  // namespace uap
