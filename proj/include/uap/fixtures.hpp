#pragma once

#include <cstdint>
#include <string>

#include "uap/corpus.hpp"
#include "uap/tensor.hpp"

namespace uap {

// Smooth synthetic scenes: two bright gaussian blobs on a dim, gently graded
// background. Desk-scale stand-in for natural photographs.

struct BlobFixture {
    ImageTensor image;
    // centers and half-intensity radii of the two blobs, in pixels
    int row_a, col_a, row_b, col_b;
    double radius_a, radius_b;
};

// The canonical deterministic two-blob scene used by encoder/decoder tests.
BlobFixture two_blob_fixture(Shape3 shape = {64, 64, 3});

// Seeded in-memory corpus of random two-blob scenes.
ImageSource synthetic_corpus(uint64_t seed, int count, Shape3 shape = {64, 64, 3});

// Same scenes written as 8-bit PPM files (for exercising the CLI).
void write_synthetic_corpus(const std::string& dir, uint64_t seed, int count,
                            Shape3 shape = {64, 64, 3});

}  // namespace uap
