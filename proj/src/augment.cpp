#include "uap/augment.hpp"

#include <cmath>

#include "uap/errors.hpp"
#include "uap/image_io.hpp"

namespace uap {

std::string to_string(AugmentKind kind) {
    switch (kind) {
        case AugmentKind::crop_resize: return "crop_resize";
        case AugmentKind::cutout: return "cutout";
        case AugmentKind::uniform_noise: return "uniform_noise";
        case AugmentKind::color_shift: return "color_shift";
        case AugmentKind::add_image: return "add_image";
    }
    return "?";
}

AugmentKind augment_kind_from_string(const std::string& name) {
    if (name == "crop_resize") return AugmentKind::crop_resize;
    if (name == "cutout") return AugmentKind::cutout;
    if (name == "uniform_noise") return AugmentKind::uniform_noise;
    if (name == "color_shift") return AugmentKind::color_shift;
    if (name == "add_image") return AugmentKind::add_image;
    throw ConfigError("unknown augmentation kind: '" + name + "'");
}

AugmentSpec default_augment_spec(AugmentKind kind, Shape3 uap_shape) {
    AugmentSpec spec;
    spec.kind = kind;
    spec.rows = std::max(1, static_cast<int>(std::lround(uap_shape.h * 200.0 / 1024.0)));
    spec.cols = std::max(1, static_cast<int>(std::lround(uap_shape.w * 200.0 / 1024.0)));
    spec.magnitude = 1.0;
    spec.weight = 1.0;
    return spec;
}

Array3 apply_augmentation(const AugmentSpec& spec, const Array3& v, Rng& rng,
                          const ImageSource* corpus) {
    return apply_augmentation_draw(spec, v, rng, corpus).output;
}

AugmentDraw apply_augmentation_draw(const AugmentSpec& spec, const Array3& v, Rng& rng,
                                    const ImageSource* corpus) {
    const Shape3 s = v.shape;
    AugmentDraw draw;
    draw.kind = spec.kind;
    switch (spec.kind) {
        case AugmentKind::crop_resize: {
            if (spec.rows <= 0 || spec.cols <= 0 || spec.rows > s.h || spec.cols > s.w)
                throw ContractError("crop_resize: window does not fit inside the perturbation");
            draw.rows = spec.rows;
            draw.cols = spec.cols;
            draw.r0 = static_cast<int>(rng.below(s.h - spec.rows + 1));
            draw.c0 = static_cast<int>(rng.below(s.w - spec.cols + 1));
            Array3 crop(spec.rows, spec.cols, s.c);
            for (int i = 0; i < spec.rows; ++i)
                for (int j = 0; j < spec.cols; ++j)
                    for (int k = 0; k < s.c; ++k)
                        crop.at(i, j, k) = v.at(draw.r0 + i, draw.c0 + j, k);
            draw.output = resize_bilinear(crop, s.h, s.w);
            return draw;
        }
        case AugmentKind::cutout: {
            if (spec.rows <= 0 || spec.cols <= 0 || spec.rows > s.h || spec.cols > s.w)
                throw ContractError("cutout: window does not fit inside the perturbation");
            draw.rows = spec.rows;
            draw.cols = spec.cols;
            draw.r0 = static_cast<int>(rng.below(s.h - spec.rows + 1));
            draw.c0 = static_cast<int>(rng.below(s.w - spec.cols + 1));
            draw.output = v;
            for (int i = 0; i < spec.rows; ++i)
                for (int j = 0; j < spec.cols; ++j)
                    for (int k = 0; k < s.c; ++k) draw.output.at(draw.r0 + i, draw.c0 + j, k) = 0.0;
            return draw;
        }
        case AugmentKind::uniform_noise: {
            draw.output = v;
            for (double& x : draw.output.v) x += rng.uniform(-spec.magnitude, spec.magnitude);
            return draw;
        }
        case AugmentKind::color_shift: {
            std::vector<double> shift(s.c);
            for (double& c : shift) c = rng.uniform(-spec.magnitude, spec.magnitude);
            draw.output = v;
            for (int i = 0; i < s.h; ++i)
                for (int j = 0; j < s.w; ++j)
                    for (int k = 0; k < s.c; ++k) draw.output.at(i, j, k) += shift[k];
            return draw;
        }
        case AugmentKind::add_image: {
            if (corpus == nullptr || corpus->empty())
                throw ConfigError("add_image augmentation needs a nonempty corpus");
            const ImageTensor& x = corpus->image(static_cast<size_t>(rng.below(corpus->size())));
            if (!(x.shape == s)) throw ContractError("add_image: corpus image shape mismatch");
            draw.output = v;
            for (size_t i = 0; i < draw.output.v.size(); ++i)
                draw.output.v[i] += spec.weight * x.v[i];
            return draw;
        }
    }
    throw ContractError("apply_augmentation: unknown kind");
}

Array3 augmentation_vjp(const AugmentDraw& draw, const Array3& grad_output) {
    const Shape3 s = grad_output.shape;
    switch (draw.kind) {
        case AugmentKind::crop_resize: {
            Array3 crop_grad = resize_bilinear_vjp(grad_output, draw.rows, draw.cols);
            Array3 grad_v(s);
            for (int i = 0; i < draw.rows; ++i)
                for (int j = 0; j < draw.cols; ++j)
                    for (int k = 0; k < s.c; ++k)
                        grad_v.at(draw.r0 + i, draw.c0 + j, k) = crop_grad.at(i, j, k);
            return grad_v;
        }
        case AugmentKind::cutout: {
            Array3 grad_v = grad_output;
            for (int i = 0; i < draw.rows; ++i)
                for (int j = 0; j < draw.cols; ++j)
                    for (int k = 0; k < s.c; ++k) grad_v.at(draw.r0 + i, draw.c0 + j, k) = 0.0;
            return grad_v;
        }
        case AugmentKind::uniform_noise:
        case AugmentKind::color_shift:
        case AugmentKind::add_image:
            return grad_output;  // additive terms are constant in v
    }
    throw ContractError("augmentation_vjp: unknown kind");
}

}  // namespace uap
