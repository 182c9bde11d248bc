#include "uap/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <vector>

#include "uap/errors.hpp"

namespace uap {

namespace {

// Next whitespace-separated token, skipping '#' comment lines.
int read_pnm_int(std::istream& is, const std::string& path) {
    int ch = is.get();
    while (is) {
        if (ch == '#') {
            while (is && ch != '\n') ch = is.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = is.get();
    }
    if (!is) throw FormatError("truncated PNM header: " + path);
    int value = 0;
    bool any = false;
    while (is && std::isdigit(ch)) {
        value = value * 10 + (ch - '0');
        any = true;
        ch = is.get();
    }
    if (!any) throw FormatError("malformed PNM header: " + path);
    return value;
}

}  // namespace

ImageTensor read_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open image: " + path);

    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (!is || m0 != 'P' || (m1 != '5' && m1 != '6'))
        throw FormatError("unsupported image format (expect binary PGM/PPM): " + path);
    int channels = m1 == '6' ? 3 : 1;

    int w = read_pnm_int(is, path);
    int h = read_pnm_int(is, path);
    int maxval = read_pnm_int(is, path);
    if (w <= 0 || h <= 0) throw FormatError("bad PNM dimensions: " + path);
    if (maxval != 255) throw FormatError("only 8-bit PNM supported: " + path);

    size_t n = static_cast<size_t>(w) * h * channels;
    std::vector<unsigned char> raw(n);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (!is) throw FormatError("truncated PNM payload: " + path);

    ImageTensor img(h, w, 3);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < 3; ++k) {
                size_t src = (static_cast<size_t>(i) * w + j) * channels + (channels == 3 ? k : 0);
                img.at(i, j, k) = raw[src] / 255.0;
            }
    return img;
}

void write_image_ppm(const ImageTensor& image, const std::string& path) {
    if (image.shape.c != 3) throw ContractError("write_image_ppm: expects 3 channels");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write image: " + path);
    os << "P6\n" << image.shape.w << " " << image.shape.h << "\n255\n";
    std::vector<unsigned char> raw(image.v.size());
    for (size_t i = 0; i < image.v.size(); ++i) {
        double x = std::clamp(image.v[i], 0.0, 1.0);
        raw[i] = static_cast<unsigned char>(std::lround(x * 255.0));
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw IoError("failed writing image: " + path);
}

namespace {

struct Tap {
    int lo, hi;
    double t;
};

Tap axis_tap(int i, int src, double scale) {
    double pos = (i + 0.5) * scale - 0.5;
    int lo = static_cast<int>(std::floor(pos));
    double t = pos - lo;
    int hi = lo + 1;
    if (lo < 0) { lo = hi = 0; t = 0.0; }
    if (hi > src - 1) { hi = src - 1; if (lo > src - 1) { lo = src - 1; t = 0.0; } }
    return {lo, hi, t};
}

}  // namespace

ImageTensor resize_bilinear(const ImageTensor& image, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw ContractError("resize_bilinear: bad output size");
    const int h = image.shape.h, w = image.shape.w, c = image.shape.c;
    ImageTensor out(out_h, out_w, c);
    double sy = static_cast<double>(h) / out_h;
    double sx = static_cast<double>(w) / out_w;
    for (int i = 0; i < out_h; ++i) {
        Tap r = axis_tap(i, h, sy);
        for (int j = 0; j < out_w; ++j) {
            Tap s = axis_tap(j, w, sx);
            for (int k = 0; k < c; ++k) {
                out.at(i, j, k) =
                    (1 - r.t) * ((1 - s.t) * image.at(r.lo, s.lo, k) + s.t * image.at(r.lo, s.hi, k)) +
                    r.t * ((1 - s.t) * image.at(r.hi, s.lo, k) + s.t * image.at(r.hi, s.hi, k));
            }
        }
    }
    return out;
}

ImageTensor resize_bilinear_vjp(const ImageTensor& grad_output, int in_h, int in_w) {
    if (in_h <= 0 || in_w <= 0) throw ContractError("resize_bilinear_vjp: bad input size");
    const int oh = grad_output.shape.h, ow = grad_output.shape.w, c = grad_output.shape.c;
    ImageTensor grad_in(in_h, in_w, c);
    double sy = static_cast<double>(in_h) / oh;
    double sx = static_cast<double>(in_w) / ow;
    for (int i = 0; i < oh; ++i) {
        Tap r = axis_tap(i, in_h, sy);
        for (int j = 0; j < ow; ++j) {
            Tap s = axis_tap(j, in_w, sx);
            for (int k = 0; k < c; ++k) {
                double g = grad_output.at(i, j, k);
                if (g == 0.0) continue;
                grad_in.at(r.lo, s.lo, k) += (1 - r.t) * (1 - s.t) * g;
                grad_in.at(r.lo, s.hi, k) += (1 - r.t) * s.t * g;
                grad_in.at(r.hi, s.lo, k) += r.t * (1 - s.t) * g;
                grad_in.at(r.hi, s.hi, k) += r.t * s.t * g;
            }
        }
    }
    return grad_in;
}

}  // namespace uap
