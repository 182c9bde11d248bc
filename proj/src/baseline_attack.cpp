#include "uap/baseline_attack.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

#include "uap/errors.hpp"
#include "uap/ops.hpp"
#include "uap/optim.hpp"
#include "uap/rng.hpp"

namespace uap {

MaskRemovalLoss mask_removal_loss(const MaskLogits& adv_logits, const BinaryMask& clean_mask,
                                  double target_logit) {
    if (adv_logits.h != clean_mask.h || adv_logits.w != clean_mask.w)
        throw ContractError("mask_removal_loss: shape mismatch");
    MaskRemovalLoss out;
    out.grad = MaskLogits(adv_logits.h, adv_logits.w);
    int64_t n = clean_mask.count();
    if (n == 0) {
        out.loss = 0.0;
        out.empty_mask_warning = true;
        return out;
    }
    out.empty_mask_warning = false;
    double acc = 0.0;
    for (size_t i = 0; i < adv_logits.v.size(); ++i) {
        if (clean_mask.v[i] == 0) continue;
        double excess = adv_logits.v[i] - target_logit;
        if (excess > 0.0) {
            acc += excess * excess;
            out.grad.v[i] = 2.0 * excess / static_cast<double>(n);
        }
    }
    out.loss = acc / static_cast<double>(n);
    return out;
}

namespace {

struct PromptKey {
    size_t image;
    int kind, row, col, row_max, col_max;
    auto operator<=>(const PromptKey&) const = default;
};

PromptKey key_of(size_t image_idx, const Prompt& p) {
    if (p.kind == PromptKind::point)
        return {image_idx, 0, p.row, p.col, 0, 0};
    return {image_idx, 1, p.row_min, p.col_min, p.row_max, p.col_max};
}

// Shared loop behind both baseline variants. `order` is the visit schedule
// over corpus indices; `fixed_prompts`, when nonempty, overrides the
// per-visit prompt draw.
BaselineTrainResult run_attack(const Segmenter& segmenter,
                               const std::vector<const ImageTensor*>& images,
                               const std::vector<size_t>& order,
                               const std::vector<Prompt>& fixed_prompts,
                               const BaselineConfig& config) {
    if (config.steps < 1) throw ContractError("baseline attack: steps must be >= 1");
    if (!(config.epsilon > 0.0 && config.epsilon < 1.0))
        throw ContractError("baseline attack: epsilon outside (0,1)");
    const Shape3 shape = segmenter.encoder().input_shape();
    for (const ImageTensor* img : images)
        if (!(img->shape == shape))
            throw ContractError("baseline attack: image shape does not match the segmenter");

    Array3 v(shape);
    Adam adam(v.size(), {config.lr, config.beta1, config.beta2, 1e-8});
    Rng rng_prompt = Rng::stream(config.seed, 3);
    std::map<PromptKey, BinaryMask> clean_cache;

    BaselineTrainResult result;
    result.trace.reserve(config.steps);

    for (int t = 0; t < config.steps; ++t) {
        size_t idx = order[t % order.size()];
        const ImageTensor& img = *images[idx];

        std::vector<Prompt> prompts;
        if (!fixed_prompts.empty()) {
            prompts = fixed_prompts;
        } else {
            for (int p = 0; p < config.prompts_per_image; ++p)
                prompts.push_back(Prompt::point(static_cast<int>(rng_prompt.below(shape.h)),
                                                static_cast<int>(rng_prompt.below(shape.w))));
        }

        // adversarial image; gradient dies where the clamp is active
        ImageTensor adv(shape);
        std::vector<uint8_t> interior(v.size());
        for (size_t i = 0; i < v.size(); ++i) {
            double raw = img.v[i] + v.v[i];
            adv.v[i] = std::clamp(raw, 0.0, 1.0);
            interior[i] = raw > 0.0 && raw < 1.0;
        }

        double loss = 0.0;
        Array3 vbar(shape);
        double inv_p = 1.0 / static_cast<double>(prompts.size());
        for (const Prompt& prompt : prompts) {
            PromptKey key = key_of(idx, prompt);
            auto it = clean_cache.find(key);
            if (it == clean_cache.end())
                it = clean_cache.emplace(key, binarize_mask(segmenter.predict_mask(img, prompt)))
                         .first;
            const BinaryMask& clean = it->second;

            MaskLogits adv_logits = segmenter.predict_mask(adv, prompt);
            MaskRemovalLoss l = mask_removal_loss(adv_logits, clean, config.target_logit);
            loss += l.loss * inv_p;
            if (l.empty_mask_warning) continue;
            for (double& g : l.grad.v) g *= inv_p;
            ImageTensor xbar = segmenter.predict_mask_vjp(adv, prompt, l.grad);
            for (size_t i = 0; i < v.size(); ++i)
                if (interior[i]) vbar.v[i] += xbar.v[i];
        }

        if (!std::isfinite(loss))
            throw DivergenceError("baseline attack: non-finite loss at iteration " +
                                  std::to_string(t), t);
        result.trace.push_back({t, loss});

        adam.step(v.v, vbar.v);
        v = linf_project(v, config.epsilon);
    }

    for (double& x : v.v) {
        float f = static_cast<float>(x);
        while (std::abs(static_cast<double>(f)) > config.epsilon) f = std::nextafterf(f, 0.0f);
        x = static_cast<double>(f);
    }
    result.uap.data = std::move(v);
    result.uap.epsilon = config.epsilon;
    {
        char desc[192];
        std::snprintf(desc, sizeof desc, "baseline|%.17g|%d|%.17g|%d|%.17g|%llu",
                      config.epsilon, config.steps, config.lr, config.prompts_per_image,
                      config.target_logit, static_cast<unsigned long long>(config.seed));
        uint64_t h = 0xcbf29ce484222325ull;
        for (const char* c = desc; *c; ++c) {
            h ^= static_cast<unsigned char>(*c);
            h *= 0x100000001b3ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        result.uap.meta["config_hash"] = buf;
    }
    result.uap.meta["seed"] = std::to_string(config.seed);
    result.uap.meta["steps"] = std::to_string(config.steps);
    result.uap.meta["lr"] = std::to_string(config.lr);
    result.uap.meta["target_logit"] = std::to_string(config.target_logit);
    result.uap.meta["epsilon"] = std::to_string(config.epsilon);
    result.uap.meta["encoder_fingerprint"] = segmenter.encoder().fingerprint();
    return result;
}

}  // namespace

BaselineTrainResult attack_image_dependent(const Segmenter& segmenter, const ImageTensor& image,
                                           const std::vector<Prompt>& prompts,
                                           const BaselineConfig& config) {
    const Shape3 shape = segmenter.encoder().input_shape();
    for (const Prompt& p : prompts) validate_prompt(p, shape.h, shape.w);
    BaselineTrainResult result =
        run_attack(segmenter, {&image}, {0}, prompts, config);
    result.uap.meta["method"] = "baseline_image_dependent";
    return result;
}

BaselineTrainResult attack_image_agnostic(const Segmenter& segmenter,
                                          const ImageSource& train_corpus,
                                          const BaselineConfig& config) {
    if (train_corpus.empty()) throw ConfigError("attack_image_agnostic: empty training corpus");
    std::vector<const ImageTensor*> images;
    std::vector<size_t> order;
    for (size_t i = 0; i < train_corpus.size(); ++i) {
        images.push_back(&train_corpus.image(i));
        order.push_back(i);
    }
    Rng rng_order = Rng::stream(config.seed, 4);
    rng_order.shuffle(order);
    BaselineTrainResult result = run_attack(segmenter, images, order, {}, config);
    result.uap.meta["method"] = "baseline_image_agnostic";
    return result;
}

}  // namespace uap
