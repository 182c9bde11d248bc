#pragma once

#include <string>

#include "uap/tensor.hpp"

namespace uap {

// UAP1 container: magic "UAP1", u32le header length, JSON header
// {shape:[H,W,C], dtype:"f32", epsilon, meta}, then H*W*C little-endian
// 32-bit floats, row-major. Round trips bit-exactly; load refuses files
// whose payload violates the declared epsilon budget.
void save_uap(const Uap& uap, const std::string& path);
Uap load_uap(const std::string& path);

}  // namespace uap
