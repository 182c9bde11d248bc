#pragma once

#include <vector>

#include "uap/augment.hpp"
#include "uap/corpus.hpp"
#include "uap/encoders.hpp"
#include "uap/membank.hpp"
#include "uap/tensor.hpp"

namespace uap {

enum class UapInit { zeros, uniform };

struct CLConfig {
    double tau = 0.1;
    int k = 0;  // negatives per step; 0 means all bank rows
    AugmentSpec augment{AugmentKind::add_image, 0, 0, 1.0, 1.0};
    double epsilon = 10.0 / 255.0;
    int steps = 2000;
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    UapInit init = UapInit::uniform;
    uint64_t seed = 0;
};

struct InfoNceResult {
    double loss;
    double s_pos;        // q . k_plus
    double mean_s_neg;   // mean of q . k_minus
    std::vector<double> grad_q;
    std::vector<double> grad_k_pos;
};

// Softmax-style contrastive loss with the overflow-safe max-subtraction.
// All embeddings must be normalized; negatives must be nonempty; tau > 0.
InfoNceResult infonce_loss(const Embedding& q, const Embedding& k_pos,
                           const std::vector<Embedding>& k_negs, double tau);

// One training-step evaluation at a fixed augmentation draw: the loss and
// its full gradient in v, through both the anchor branch q = embed(encode(v))
// and the positive branch k+ = embed(encode(draw.output)).
struct CLStep {
    double loss;
    double s_pos;
    double mean_s_neg;
    Array3 grad_v;
};

CLStep compute_cl_step(const Encoder& encoder, const Array3& v, const AugmentDraw& draw,
                       const std::vector<Embedding>& k_negs, double tau);

// Fresh perturbation, zeros or i.i.d. Uniform(-eps, eps). Values are
// f32-representable so a UAP1 round trip is bit-exact.
Uap init_uap(Shape3 shape, double epsilon, UapInit mode, uint64_t seed);

struct TraceRow {
    int iteration;
    double loss;
    double s_pos;
    double mean_s_neg;
};

struct CLTrainResult {
    Uap uap;
    std::vector<TraceRow> trace;
};

// Perturbation-centric optimization: anchor q = embed(encode(v)) with v fed
// raw to the encoder, positive from the augmented perturbation, negatives
// from the frozen bank; Adam step on the contrastive loss, then projection
// to the epsilon ball. Deterministic given (config, corpus, bank).
CLTrainResult train_uap_cl(const Encoder& encoder, const ImageSource& aug_corpus,
                           const MemoryBank& bank, const CLConfig& config);

}  // namespace uap
