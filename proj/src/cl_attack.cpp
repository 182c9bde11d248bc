#include "uap/cl_attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "uap/errors.hpp"
#include "uap/ops.hpp"
#include "uap/optim.hpp"
#include "uap/rng.hpp"

namespace uap {

InfoNceResult infonce_loss(const Embedding& q, const Embedding& k_pos,
                           const std::vector<Embedding>& k_negs, double tau) {
    if (!(tau > 0.0)) throw ContractError("infonce_loss: tau must be > 0");
    if (k_negs.empty()) throw ContractError("infonce_loss: negatives must be nonempty");
    if (!q.normalized || !k_pos.normalized)
        throw ContractError("infonce_loss: q and k_pos must be normalized");
    const size_t dim = q.v.size();
    if (k_pos.v.size() != dim) throw ContractError("infonce_loss: k_pos dimension mismatch");

    double s_pos = 0.0;
    for (size_t i = 0; i < dim; ++i) s_pos += q.v[i] * k_pos.v[i];

    std::vector<double> s_neg(k_negs.size());
    for (size_t n = 0; n < k_negs.size(); ++n) {
        const Embedding& k = k_negs[n];
        if (!k.normalized || k.v.size() != dim)
            throw ContractError("infonce_loss: bad negative embedding");
        double s = 0.0;
        for (size_t i = 0; i < dim; ++i) s += q.v[i] * k.v[i];
        s_neg[n] = s;
    }

    // softmax over {s_pos, s_neg...} / tau with max-subtraction
    double m = s_pos / tau;
    for (double s : s_neg) m = std::max(m, s / tau);
    double e_pos = std::exp(s_pos / tau - m);
    double z = e_pos;
    for (double s : s_neg) z += std::exp(s / tau - m);

    InfoNceResult res;
    res.loss = -(s_pos / tau - m - std::log(z));
    res.s_pos = s_pos;
    res.mean_s_neg = 0.0;
    for (double s : s_neg) res.mean_s_neg += s;
    res.mean_s_neg /= static_cast<double>(s_neg.size());

    // dL/dq = ((p_pos - 1) k_pos + sum_i p_i k_neg_i) / tau
    // dL/dk_pos = ((p_pos - 1) / tau) q
    res.grad_q.assign(dim, 0.0);
    res.grad_k_pos.assign(dim, 0.0);
    double p_pos = e_pos / z;
    for (size_t i = 0; i < dim; ++i) {
        res.grad_q[i] = (p_pos - 1.0) * k_pos.v[i] / tau;
        res.grad_k_pos[i] = (p_pos - 1.0) * q.v[i] / tau;
    }
    for (size_t n = 0; n < k_negs.size(); ++n) {
        double p = std::exp(s_neg[n] / tau - m) / z;
        for (size_t i = 0; i < dim; ++i) res.grad_q[i] += p * k_negs[n].v[i] / tau;
    }
    return res;
}

CLStep compute_cl_step(const Encoder& encoder, const Array3& v, const AugmentDraw& draw,
                       const std::vector<Embedding>& k_negs, double tau) {
    FeatureMap fv = encoder.encode(v);
    Embedding q = embed(fv);
    FeatureMap fpos = encoder.encode(draw.output);
    Embedding k_pos = embed(fpos);

    InfoNceResult loss = infonce_loss(q, k_pos, k_negs, tau);

    CLStep step;
    step.loss = loss.loss;
    step.s_pos = loss.s_pos;
    step.mean_s_neg = loss.mean_s_neg;

    // anchor branch
    step.grad_v = encoder.encode_vjp(v, embed_vjp(fv, loss.grad_q));
    // positive branch: through the augmentation back to v
    ImageTensor pos_grad = encoder.encode_vjp(draw.output, embed_vjp(fpos, loss.grad_k_pos));
    Array3 through_aug = augmentation_vjp(draw, pos_grad);
    for (size_t i = 0; i < step.grad_v.v.size(); ++i) step.grad_v.v[i] += through_aug.v[i];
    return step;
}

namespace {

// Round to f32 without leaving the epsilon ball (f32 rounding may otherwise
// push a value one ulp past the budget).
double round_f32_in_ball(double x, double eps) {
    float f = static_cast<float>(x);
    while (std::abs(static_cast<double>(f)) > eps) f = std::nextafterf(f, 0.0f);
    return static_cast<double>(f);
}

}  // namespace

Uap init_uap(Shape3 shape, double epsilon, UapInit mode, uint64_t seed) {
    if (shape.count() <= 0) throw ContractError("init_uap: invalid shape");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ContractError("init_uap: epsilon outside (0,1)");
    Uap uap;
    uap.data = Array3(shape);
    uap.epsilon = epsilon;
    if (mode == UapInit::uniform) {
        Rng rng(seed);
        for (double& x : uap.data.v)
            x = round_f32_in_ball(rng.uniform(-epsilon, epsilon), epsilon);
    }
    uap.meta["init"] = mode == UapInit::zeros ? "zeros" : "uniform";
    uap.meta["seed"] = std::to_string(seed);
    return uap;
}

CLTrainResult train_uap_cl(const Encoder& encoder, const ImageSource& aug_corpus,
                           const MemoryBank& bank, const CLConfig& config) {
    if (config.steps < 1) throw ContractError("train_uap_cl: steps must be >= 1");
    if (!(config.tau > 0.0)) throw ContractError("train_uap_cl: tau must be > 0");
    if (!(config.epsilon > 0.0 && config.epsilon < 1.0))
        throw ContractError("train_uap_cl: epsilon outside (0,1)");
    check_bank_matches(bank, encoder);
    if (config.augment.kind == AugmentKind::add_image && aug_corpus.empty())
        throw ConfigError("train_uap_cl: add_image augmentation needs a nonempty corpus");

    const Shape3 shape = encoder.input_shape();
    AugmentSpec aug = config.augment;
    if (aug.rows == 0 || aug.cols == 0) {
        AugmentSpec dflt = default_augment_spec(aug.kind, shape);
        if (aug.rows == 0) aug.rows = dflt.rows;
        if (aug.cols == 0) aug.cols = dflt.cols;
    }
    int k = config.k == 0 ? bank.m : config.k;

    Uap uap = init_uap(shape, config.epsilon, config.init, config.seed);
    Array3 v = uap.data;
    Rng rng_aug = Rng::stream(config.seed, 1);
    Rng rng_neg = Rng::stream(config.seed, 2);
    Adam adam(v.size(), {config.lr, config.beta1, config.beta2, 1e-8});

    CLTrainResult result;
    result.trace.reserve(config.steps);

    for (int t = 0; t < config.steps; ++t) {
        AugmentDraw draw = apply_augmentation_draw(aug, v, rng_aug, &aug_corpus);
        std::vector<Embedding> k_negs = sample_negatives(bank, k, rng_neg);

        CLStep step = compute_cl_step(encoder, v, draw, k_negs, config.tau);
        if (!std::isfinite(step.loss))
            throw DivergenceError("train_uap_cl: non-finite loss at iteration " +
                                  std::to_string(t), t);
        result.trace.push_back({t, step.loss, step.s_pos, step.mean_s_neg});

        adam.step(v.v, step.grad_v.v);
        v = linf_project(v, config.epsilon);
    }

    for (double& x : v.v) x = round_f32_in_ball(x, config.epsilon);
    uap.data = std::move(v);
    {
        char desc[256];
        std::snprintf(desc, sizeof desc, "cl|%.17g|%d|%s|%.17g|%.17g|%d|%.17g|%.17g|%.17g|%d|%llu",
                      config.tau, k, to_string(aug.kind).c_str(), aug.weight, aug.magnitude,
                      aug.rows, config.epsilon, config.lr, config.beta1, config.steps,
                      static_cast<unsigned long long>(config.seed));
        uint64_t h = 0xcbf29ce484222325ull;
        for (const char* c = desc; *c; ++c) {
            h ^= static_cast<unsigned char>(*c);
            h *= 0x100000001b3ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        uap.meta["config_hash"] = buf;
    }
    uap.meta["method"] = "cl_infonce";
    uap.meta["tau"] = std::to_string(config.tau);
    uap.meta["k"] = std::to_string(k);
    uap.meta["augment"] = to_string(aug.kind);
    uap.meta["augment_weight"] = std::to_string(aug.weight);
    uap.meta["steps"] = std::to_string(config.steps);
    uap.meta["lr"] = std::to_string(config.lr);
    uap.meta["epsilon"] = std::to_string(config.epsilon);
    uap.meta["encoder_fingerprint"] = encoder.fingerprint();
    uap.meta["anchor_input"] = "raw_uap";
    result.uap = std::move(uap);
    return result;
}

}  // namespace uap
