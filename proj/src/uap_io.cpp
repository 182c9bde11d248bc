#include "uap/uap_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

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

void save_uap(const Uap& uap, const std::string& path) {
    const Shape3& s = uap.data.shape;
    nlohmann::json header = {
        {"shape", {s.h, s.w, s.c}},
        {"dtype", "f32"},
        {"epsilon", uap.epsilon},
        {"meta", uap.meta},
    };
    std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write UAP file: " + path);
    os.write("UAP1", 4);
    write_u32le(os, static_cast<uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<float> payload(uap.data.v.size());
    for (size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(uap.data.v[i]);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!os) throw IoError("failed writing UAP file: " + path);
}

Uap load_uap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open UAP file: " + path);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "UAP1", 4) != 0)
        throw FormatError("not a UAP1 file: " + path);
    uint32_t hlen = read_u32le(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    if (!is) throw FormatError("truncated UAP1 header: " + path);

    Uap uap;
    Shape3 shape;
    try {
        nlohmann::json header = nlohmann::json::parse(hs);
        auto sh = header.at("shape");
        shape = {sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>()};
        if (header.at("dtype").get<std::string>() != "f32")
            throw FormatError("UAP1 dtype must be f32: " + path);
        uap.epsilon = header.at("epsilon").get<double>();
        if (header.contains("meta"))
            uap.meta = header.at("meta").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad UAP1 header in " + path + ": " + e.what());
    }
    if (shape.h <= 0 || shape.w <= 0 || shape.c <= 0)
        throw FormatError("UAP1 header has invalid shape: " + path);

    size_t n = static_cast<size_t>(shape.count());
    std::vector<float> payload(n);
    is.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw FormatError("truncated UAP1 payload: " + path);
    is.peek();
    if (!is.eof()) throw FormatError("trailing bytes in UAP1 file: " + path);

    uap.data = Array3(shape);
    double max_abs = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double x = static_cast<double>(payload[i]);
        if (!std::isfinite(x)) throw FormatError("non-finite value in UAP1 payload: " + path);
        max_abs = std::max(max_abs, std::abs(x));
        uap.data.v[i] = x;
    }
    if (max_abs > uap.epsilon + 1e-9)
        throw FormatError("UAP1 payload violates declared epsilon (" + std::to_string(max_abs) +
                          " > " + std::to_string(uap.epsilon) + "): " + path);
    return uap;
}

}  // namespace uap
