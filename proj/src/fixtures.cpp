#include "uap/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "uap/errors.hpp"
#include "uap/image_io.hpp"
#include "uap/rng.hpp"

namespace uap {

namespace {

struct Blob {
    double row, col, sigma, amp;
    double color[3];
};

// sinusoidal texture octave; wavelengths of a few pixels give every patch
// real intra-patch structure, like photographic texture does
struct Texture {
    double amp;
    double freq_r, freq_c;  // cycles per image
    double phase;
    double chroma[3];       // per-channel weighting
};

ImageTensor render_scene(Shape3 shape, const double base[3], double grad_amp, double grad_dir,
                         const std::vector<Blob>& blobs, const std::vector<Texture>& textures) {
    ImageTensor img(shape);
    double gr = std::cos(grad_dir), gc = std::sin(grad_dir);
    for (int i = 0; i < shape.h; ++i) {
        for (int j = 0; j < shape.w; ++j) {
            double g = grad_amp * (gr * i / shape.h + gc * j / shape.w);
            for (int k = 0; k < shape.c; ++k) {
                double v = base[k % 3] + g;
                for (const Texture& t : textures)
                    v += t.amp * t.chroma[k % 3] *
                         std::sin(6.283185307179586 *
                                      (t.freq_r * i / shape.h + t.freq_c * j / shape.w) +
                                  t.phase);
                for (const Blob& b : blobs) {
                    double dr = i - b.row, dc = j - b.col;
                    double fall = std::exp(-(dr * dr + dc * dc) / (2.0 * b.sigma * b.sigma));
                    v += b.amp * b.color[k % 3] * fall;
                }
                img.at(i, j, k) = std::clamp(v, 0.02, 0.97);
            }
        }
    }
    return img;
}

}  // namespace

BlobFixture two_blob_fixture(Shape3 shape) {
    BlobFixture fx;
    fx.row_a = shape.h * 18 / 64;
    fx.col_a = shape.w * 18 / 64;
    fx.row_b = shape.h * 46 / 64;
    fx.col_b = shape.w * 46 / 64;
    double sigma = shape.h * 6.5 / 64.0;
    fx.radius_a = fx.radius_b = sigma * std::sqrt(2.0 * std::log(2.0));

    std::vector<Blob> blobs = {
        {static_cast<double>(fx.row_a), static_cast<double>(fx.col_a), sigma, 0.85, {1.0, 0.45, 0.3}},
        {static_cast<double>(fx.row_b), static_cast<double>(fx.col_b), sigma, 0.85, {0.3, 0.5, 1.0}},
    };
    double base[3] = {0.12, 0.13, 0.14};
    std::vector<Texture> textures = {
        {0.05, 9.0, 4.0, 0.3, {1.0, 0.8, 0.6}},
        {0.04, 3.0, 11.0, 2.1, {0.6, 1.0, 0.8}},
    };
    fx.image = render_scene(shape, base, 0.05, 0.6, blobs, textures);
    return fx;
}

ImageSource synthetic_corpus(uint64_t seed, int count, Shape3 shape) {
    if (count < 1) throw ContractError("synthetic_corpus: count must be >= 1");
    std::vector<ImageSource::Item> items;
    items.reserve(count);
    Rng rng(seed);
    int margin = std::max(6, shape.h / 6);
    double min_sep = shape.h * 0.35;

    for (int n = 0; n < count; ++n) {
        std::vector<Blob> blobs;
        int n_blobs = 2 + static_cast<int>(rng.below(2));  // 2 or 3
        for (int b = 0; b < n_blobs; ++b) {
            Blob blob;
            for (int tries = 0;; ++tries) {
                blob.row = rng.uniform(margin, shape.h - 1 - margin);
                blob.col = rng.uniform(margin, shape.w - 1 - margin);
                if (blobs.empty() || tries > 40) break;
                double closest = 1e9;
                for (const Blob& other : blobs)
                    closest = std::min(closest, std::hypot(blob.row - other.row,
                                                           blob.col - other.col));
                if (closest >= min_sep) break;
            }
            blob.sigma = rng.uniform(shape.h * 4.5 / 64.0, shape.h * 8.0 / 64.0);
            blob.amp = rng.uniform(0.65, 0.9);
            double maxc = 0.0;
            for (double& c : blob.color) {
                c = rng.uniform(0.15, 1.0);
                maxc = std::max(maxc, c);
            }
            for (double& c : blob.color) c /= maxc;
            blobs.push_back(blob);
        }
        double base[3];
        for (double& c : base) c = rng.uniform(0.08, 0.18);
        double grad_amp = rng.uniform(0.0, 0.1);
        double grad_dir = rng.uniform(0.0, 6.283185307179586);
        std::vector<Texture> textures(2);
        for (Texture& t : textures) {
            t.amp = rng.uniform(0.03, 0.08);
            double freq = rng.uniform(5.0, 14.0);  // wavelength ~ 4.5..13 px at 64
            double dir = rng.uniform(0.0, 6.283185307179586);
            t.freq_r = freq * std::cos(dir);
            t.freq_c = freq * std::sin(dir);
            t.phase = rng.uniform(0.0, 6.283185307179586);
            for (double& c : t.chroma) c = rng.uniform(0.5, 1.0);
        }

        char id[32];
        std::snprintf(id, sizeof id, "synth_%04d", n);
        items.push_back({id, "", render_scene(shape, base, grad_amp, grad_dir, blobs, textures)});
    }
    return ImageSource(std::move(items));
}

void write_synthetic_corpus(const std::string& dir, uint64_t seed, int count, Shape3 shape) {
    std::filesystem::create_directories(dir);
    ImageSource src = synthetic_corpus(seed, count, shape);
    for (size_t i = 0; i < src.size(); ++i) {
        write_image_ppm(src.image(i), dir + "/" + src.id(i) + ".ppm");
    }
}

}  // namespace uap
