#include "uap/membank.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "uap/errors.hpp"

namespace uap {

namespace {

void write_u32le(std::ostream& os, uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                          static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

MemoryBank build_membank(const Encoder& encoder, const ImageSource& corpus, int m) {
    if (m < 1) throw ConfigError("build_membank: M must be >= 1");
    if (corpus.size() < static_cast<size_t>(m))
        throw ConfigError("build_membank: corpus has " + std::to_string(corpus.size()) +
                          " images, need M=" + std::to_string(m));
    MemoryBank bank;
    bank.m = m;
    bank.d = static_cast<int>(encoder.feature_shape().count());
    bank.encoder_fingerprint = encoder.fingerprint();
    bank.embeddings.resize(static_cast<size_t>(m) * bank.d);
    bank.source_ids.reserve(m);
    for (int i = 0; i < m; ++i) {
        Embedding e = embed(encoder.encode(corpus.image(i)));
        // round through f32 so in-memory and persisted banks are identical
        for (int j = 0; j < bank.d; ++j)
            bank.embeddings[static_cast<size_t>(i) * bank.d + j] =
                static_cast<double>(static_cast<float>(e.v[j]));
        bank.source_ids.push_back(corpus.id(i));
    }
    return bank;
}

std::vector<Embedding> sample_negatives(const MemoryBank& bank, int k, Rng& rng) {
    if (k < 1 || k > bank.m)
        throw ContractError("sample_negatives: K=" + std::to_string(k) + " outside [1, M=" +
                            std::to_string(bank.m) + "]");
    std::vector<int> idx = rng.sample_without_replacement(bank.m, k);
    std::vector<Embedding> out(k);
    for (int i = 0; i < k; ++i) {
        out[i].v.assign(bank.row(idx[i]), bank.row(idx[i]) + bank.d);
        out[i].normalized = true;
    }
    return out;
}

void check_bank_matches(const MemoryBank& bank, const Encoder& encoder) {
    if (bank.encoder_fingerprint != encoder.fingerprint())
        throw ConfigError("memory bank was built for encoder " + bank.encoder_fingerprint +
                          " but the current encoder is " + encoder.fingerprint());
    if (bank.d != encoder.feature_shape().count())
        throw ConfigError("memory bank embedding dimension does not match the encoder");
}

void save_membank(const MemoryBank& bank, const std::string& path) {
    nlohmann::json header = {
        {"M", bank.m},
        {"D", bank.d},
        {"dtype", "f32"},
        {"encoder_fingerprint", bank.encoder_fingerprint},
        {"source_ids", bank.source_ids},
    };
    std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write memory bank: " + path);
    os.write("MBK1", 4);
    write_u32le(os, static_cast<uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> payload(bank.embeddings.size());
    for (size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(bank.embeddings[i]);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!os) throw IoError("failed writing memory bank: " + path);
}

MemoryBank load_membank(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open memory bank: " + path);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "MBK1", 4) != 0)
        throw FormatError("not an MBK1 file: " + path);
    uint32_t hlen = read_u32le(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    if (!is) throw FormatError("truncated MBK1 header: " + path);

    MemoryBank bank;
    try {
        nlohmann::json header = nlohmann::json::parse(hs);
        bank.m = header.at("M").get<int>();
        bank.d = header.at("D").get<int>();
        if (header.at("dtype").get<std::string>() != "f32")
            throw FormatError("MBK1 dtype must be f32: " + path);
        bank.encoder_fingerprint = header.at("encoder_fingerprint").get<std::string>();
        bank.source_ids = header.at("source_ids").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad MBK1 header in " + path + ": " + e.what());
    }
    if (bank.m < 1 || bank.d < 1) throw FormatError("MBK1 header has invalid sizes: " + path);

    size_t n = static_cast<size_t>(bank.m) * bank.d;
    std::vector<float> payload(n);
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw FormatError("truncated MBK1 payload: " + path);
    is.peek();
    if (!is.eof()) throw FormatError("trailing bytes in MBK1 file: " + path);

    bank.embeddings.resize(n);
    for (size_t i = 0; i < n; ++i) bank.embeddings[i] = static_cast<double>(payload[i]);

    for (int i = 0; i < bank.m; ++i) {
        double sq = 0.0;
        for (int j = 0; j < bank.d; ++j) {
            double x = bank.row(i)[j];
            if (!std::isfinite(x)) throw FormatError("non-finite embedding in MBK1 file: " + path);
            sq += x * x;
        }
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-5)
            throw FormatError("MBK1 row " + std::to_string(i) + " is not unit norm: " + path);
    }
    return bank;
}

}  // namespace uap
