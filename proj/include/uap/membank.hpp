#pragma once

#include <string>
#include <vector>

#include "uap/corpus.hpp"
#include "uap/encoders.hpp"
#include "uap/rng.hpp"

namespace uap {

// Frozen matrix of precomputed negative embeddings. Built once, never
// updated; values are f32-representable so the MBK1 file round-trips
// bit-exactly.
struct MemoryBank {
    int m = 0;  // rows
    int d = 0;  // embedding dimension
    std::vector<double> embeddings;  // m*d, row-major, each row unit norm
    std::vector<std::string> source_ids;
    std::string encoder_fingerprint;

    const double* row(int i) const { return &embeddings[static_cast<size_t>(i) * d]; }
};

// Rows are embed(encode(x_i)) for the first M corpus images in corpus order.
// Throws ConfigError when the corpus has fewer than M images.
MemoryBank build_membank(const Encoder& encoder, const ImageSource& corpus, int m);

// K distinct rows, uniform without replacement; K == M returns all rows in
// shuffled order. Throws ContractError unless 1 <= K <= M.
std::vector<Embedding> sample_negatives(const MemoryBank& bank, int k, Rng& rng);

// Rejects use of a bank against an encoder it was not built for.
void check_bank_matches(const MemoryBank& bank, const Encoder& encoder);

// MBK1 container: magic "MBK1", u32le header length, JSON header
// {M, D, dtype:"f32", encoder_fingerprint, source_ids}, then M*D
// little-endian f32, row-major.
void save_membank(const MemoryBank& bank, const std::string& path);
MemoryBank load_membank(const std::string& path);

}  // namespace uap
