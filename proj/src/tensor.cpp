#include "uap/tensor.hpp"

#include <cmath>
#include <numeric>

#include "uap/errors.hpp"

namespace uap {

std::string to_string(const Shape3& s) {
    return std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
}

bool Array3::finite() const {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

int64_t BinaryMask::count() const {
    return std::accumulate(v.begin(), v.end(), int64_t{0},
                           [](int64_t acc, uint8_t b) { return acc + (b != 0); });
}

void validate_prompt(const Prompt& p, int h, int w) {
    if (p.kind == PromptKind::point) {
        if (p.row < 0 || p.row >= h || p.col < 0 || p.col >= w)
            throw ContractError("point prompt (" + std::to_string(p.row) + "," +
                                std::to_string(p.col) + ") outside " + std::to_string(h) +
                                "x" + std::to_string(w) + " image");
    } else {
        if (p.row_min < 0 || p.col_min < 0 || p.row_max >= h || p.col_max >= w)
            throw ContractError("box prompt outside image bounds");
        if (p.row_max <= p.row_min || p.col_max <= p.col_min)
            throw ContractError("box prompt must have positive area");
    }
}

}  // namespace uap
