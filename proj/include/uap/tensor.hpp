#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace uap {

struct Shape3 {
    int h = 0;
    int w = 0;
    int c = 0;

    bool operator==(const Shape3&) const = default;
    int64_t count() const { return static_cast<int64_t>(h) * w * c; }
};

std::string to_string(const Shape3& s);

// Dense row-major H x W x C array of doubles. Used both for images
// (pixel values in [0,1]) and encoder feature maps (h x w x d).
struct Array3 {
    Array3() = default;
    Array3(int h, int w, int c, double fill = 0.0)
        : shape{h, w, c}, v(static_cast<size_t>(shape.count()), fill) {}
    explicit Array3(Shape3 s, double fill = 0.0)
        : shape(s), v(static_cast<size_t>(s.count()), fill) {}

    Shape3 shape;
    std::vector<double> v;

    double& at(int i, int j, int k) {
        return v[(static_cast<size_t>(i) * shape.w + j) * shape.c + k];
    }
    double at(int i, int j, int k) const {
        return v[(static_cast<size_t>(i) * shape.w + j) * shape.c + k];
    }
    size_t size() const { return v.size(); }
    bool finite() const;
};

using ImageTensor = Array3;  // pixels in [0,1]
using FeatureMap = Array3;   // latent h x w x d

// Per-pixel real-valued segmenter output.
struct MaskLogits {
    MaskLogits() = default;
    MaskLogits(int h, int w, double fill = 0.0)
        : h(h), w(w), v(static_cast<size_t>(h) * w, fill) {}

    int h = 0;
    int w = 0;
    std::vector<double> v;

    double& at(int i, int j) { return v[static_cast<size_t>(i) * w + j]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * w + j]; }
};

struct BinaryMask {
    BinaryMask() = default;
    BinaryMask(int h, int w) : h(h), w(w), v(static_cast<size_t>(h) * w, 0) {}

    int h = 0;
    int w = 0;
    std::vector<uint8_t> v;

    bool at(int i, int j) const { return v[static_cast<size_t>(i) * w + j] != 0; }
    void set(int i, int j, bool on) { v[static_cast<size_t>(i) * w + j] = on ? 1 : 0; }
    int64_t count() const;
    bool operator==(const BinaryMask&) const = default;
};

enum class PromptKind { point, box };

// Point or box conditioning signal, integer pixel coordinates.
// Box rows/cols are inclusive on both ends and must have positive area.
struct Prompt {
    PromptKind kind = PromptKind::point;
    int row = 0, col = 0;                              // point
    int row_min = 0, col_min = 0, row_max = 0, col_max = 0;  // box

    static Prompt point(int row, int col) {
        Prompt p;
        p.kind = PromptKind::point;
        p.row = row;
        p.col = col;
        return p;
    }
    static Prompt box(int row_min, int col_min, int row_max, int col_max) {
        Prompt p;
        p.kind = PromptKind::box;
        p.row_min = row_min;
        p.col_min = col_min;
        p.row_max = row_max;
        p.col_max = col_max;
        return p;
    }
};

// Throws ContractError if the prompt lies outside an h x w grid or the box
// has non-positive area.
void validate_prompt(const Prompt& p, int h, int w);

struct Embedding {
    std::vector<double> v;
    bool normalized = false;

    size_t dim() const { return v.size(); }
};

// A single universal perturbation with its L-inf budget and run metadata.
struct Uap {
    Array3 data;
    double epsilon = 10.0 / 255.0;
    std::map<std::string, std::string> meta;
};

}  // namespace uap
