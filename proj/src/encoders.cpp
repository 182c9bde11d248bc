#include "uap/encoders.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "uap/errors.hpp"
#include "uap/ops.hpp"
#include "uap/rng.hpp"

namespace uap {

namespace {

// FNV-1a over raw bytes; stable across runs for identical parameters.
uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

// Bilinear sampling lattice for one axis: dst index -> (lo, hi, frac).
struct AxisTap {
    int lo, hi;
    double t;
};

std::vector<AxisTap> make_axis_taps(int src, int dst) {
    std::vector<AxisTap> taps(dst);
    double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        double pos = (i + 0.5) * scale - 0.5;
        double fl = std::floor(pos);
        int lo = static_cast<int>(fl);
        double t = pos - fl;
        int hi = lo + 1;
        if (lo < 0) {
            lo = 0;
            hi = 0;
            t = 0.0;
        } else if (hi > src - 1) {
            lo = src - 1;
            hi = src - 1;
            t = 0.0;
        }
        taps[i] = {lo, hi, t};
    }
    return taps;
}

constexpr double kNormEps = 1e-12;  // inside sqrt; keeps the decoder smooth

// Variance floor for the per-patch standardization. Small against image
// content (patch std ~ 0.03..0.4) and against an epsilon-ball perturbation
// alone (std ~ eps/sqrt(3) ~ 0.02), so both standardize to unit scale.
constexpr double kPatchNormEps = 4e-3;

}  // namespace

Embedding embed(const FeatureMap& fm) {
    if (!fm.finite()) throw InvalidValueError("embed: non-finite feature map");
    double sq = 0.0;
    for (double x : fm.v) sq += x * x;
    if (!(sq > 0.0)) throw DegenerateInputError("embed: all-zero feature map");
    double norm = std::sqrt(sq);
    Embedding e;
    e.v.resize(fm.v.size());
    for (size_t i = 0; i < fm.v.size(); ++i) e.v[i] = fm.v[i] / norm;
    e.normalized = true;
    return e;
}

FeatureMap embed_vjp(const FeatureMap& fm, const std::vector<double>& grad_embedding) {
    if (grad_embedding.size() != fm.v.size())
        throw ContractError("embed_vjp: gradient dimension mismatch");
    double sq = 0.0;
    for (double x : fm.v) sq += x * x;
    if (!(sq > 0.0)) throw DegenerateInputError("embed_vjp: all-zero feature map");
    double norm = std::sqrt(sq);
    double edotg = 0.0;
    for (size_t i = 0; i < fm.v.size(); ++i) edotg += fm.v[i] / norm * grad_embedding[i];
    FeatureMap out(fm.shape);
    for (size_t i = 0; i < fm.v.size(); ++i)
        out.v[i] = (grad_embedding[i] - fm.v[i] / norm * edotg) / norm;
    return out;
}

// ---------------------------------------------------------------------------
// Patch encoder
// ---------------------------------------------------------------------------

class PatchEncoder final : public Encoder {
public:
    PatchEncoder(Shape3 input, Shape3 feature, double gain, double mix_gain,
                 std::vector<double> weight, std::vector<double> bias,
                 std::vector<double> attn_query, std::vector<double> attn_key,
                 std::vector<double> attn_value, std::vector<double> mix_bias)
        : input_(input), feature_(feature), gain_(gain), mix_gain_(mix_gain),
          weight_(std::move(weight)), bias_(std::move(bias)), wq_(std::move(attn_query)),
          wk_(std::move(attn_key)), wv_(std::move(attn_value)), mix_bias_(std::move(mix_bias)) {
        if (input_.h <= 0 || input_.w <= 0 || input_.c <= 0 || feature_.h <= 0 ||
            feature_.w <= 0 || feature_.c <= 0)
            throw ContractError("PatchEncoder: shapes must be positive");
        if (input_.h % feature_.h != 0 || input_.w % feature_.w != 0)
            throw ContractError("PatchEncoder: feature grid " + to_string(feature_) +
                                " does not tile input " + to_string(input_));
        ph_ = input_.h / feature_.h;
        pw_ = input_.w / feature_.w;
        patch_dim_ = ph_ * pw_ * input_.c;
        tokens_ = feature_.h * feature_.w;
        const size_t d = static_cast<size_t>(feature_.c);
        if (weight_.size() != static_cast<size_t>(patch_dim_) * d || bias_.size() != d ||
            wq_.size() != d * d || wk_.size() != d * d || wv_.size() != d * d ||
            mix_bias_.size() != d)
            throw ContractError("PatchEncoder: parameter sizes do not match shapes");

        uint64_t h = fnv1a(&input_, sizeof input_);
        h = fnv1a(&feature_, sizeof feature_, h);
        h = fnv1a(&gain_, sizeof gain_, h);
        h = fnv1a(&mix_gain_, sizeof mix_gain_, h);
        h = fnv1a(weight_.data(), weight_.size() * sizeof(double), h);
        h = fnv1a(bias_.data(), bias_.size() * sizeof(double), h);
        h = fnv1a(wq_.data(), wq_.size() * sizeof(double), h);
        h = fnv1a(wk_.data(), wk_.size() * sizeof(double), h);
        h = fnv1a(wv_.data(), wv_.size() * sizeof(double), h);
        h = fnv1a(mix_bias_.data(), mix_bias_.size() * sizeof(double), h);
        fingerprint_ = hex64(h);
    }

    Shape3 input_shape() const override { return input_; }
    Shape3 feature_shape() const override { return feature_; }
    std::string fingerprint() const override { return fingerprint_; }

    FeatureMap encode(const ImageTensor& image) const override {
        Scratch s(tokens_, feature_.c);
        FeatureMap mixed(feature_);
        forward(image, s, mixed);
        return mixed;
    }

    ImageTensor encode_vjp(const ImageTensor& image, const FeatureMap& grad_feature) const override {
        if (!(grad_feature.shape == feature_))
            throw ContractError("encode_vjp: gradient shape mismatch");
        const int d = feature_.c;
        const int n = tokens_;
        Scratch s(n, d);
        FeatureMap mixed(feature_);
        forward(image, s, mixed);

        // tanh around the attention output
        std::vector<double> obar(static_cast<size_t>(n) * d);
        for (int p = 0; p < n; ++p)
            for (int k = 0; k < d; ++k) {
                double f = mixed.v[static_cast<size_t>(p) * d + k];
                obar[static_cast<size_t>(p) * d + k] =
                    grad_feature.v[static_cast<size_t>(p) * d + k] * (1.0 - f * f) * mix_gain_;
            }

        // attention backward: O = A V, A = softmax(Q K^T / sqrt(d))
        std::vector<double> fbar(static_cast<size_t>(n) * d, 0.0);
        std::vector<double> vbar(static_cast<size_t>(n) * d, 0.0);
        std::vector<double> qbar(static_cast<size_t>(n) * d, 0.0);
        std::vector<double> kbar(static_cast<size_t>(n) * d, 0.0);
        std::vector<double> abar(n);
        double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        for (int p = 0; p < n; ++p) {
            const double* a = &s.attn[static_cast<size_t>(p) * n];
            const double* ob = &obar[static_cast<size_t>(p) * d];
            double row_dot = 0.0;
            for (int q = 0; q < n; ++q) {
                double acc = 0.0;
                const double* vq = &s.value[static_cast<size_t>(q) * d];
                for (int k = 0; k < d; ++k) {
                    acc += ob[k] * vq[k];
                    vbar[static_cast<size_t>(q) * d + k] += a[q] * ob[k];
                }
                abar[q] = acc;
                row_dot += a[q] * acc;
            }
            for (int q = 0; q < n; ++q) {
                double sbar = a[q] * (abar[q] - row_dot) * inv_sqrt_d;
                if (sbar == 0.0) continue;
                const double* kq = &s.key[static_cast<size_t>(q) * d];
                const double* qp = &s.query[static_cast<size_t>(p) * d];
                for (int k = 0; k < d; ++k) {
                    qbar[static_cast<size_t>(p) * d + k] += sbar * kq[k];
                    kbar[static_cast<size_t>(q) * d + k] += sbar * qp[k];
                }
            }
        }
        // through the projections back to the local features
        for (int p = 0; p < n; ++p)
            for (int k1 = 0; k1 < d; ++k1) {
                double acc = 0.0;
                for (int k2 = 0; k2 < d; ++k2) {
                    acc += qbar[static_cast<size_t>(p) * d + k2] * wq_[static_cast<size_t>(k1) * d + k2];
                    acc += kbar[static_cast<size_t>(p) * d + k2] * wk_[static_cast<size_t>(k1) * d + k2];
                    acc += vbar[static_cast<size_t>(p) * d + k2] * wv_[static_cast<size_t>(k1) * d + k2];
                }
                fbar[static_cast<size_t>(p) * d + k1] = acc;
            }

        // local stage backward: tanh, linear map, then standardization
        ImageTensor gx(input_);
        std::vector<double> patch(patch_dim_), zbar(d), pnbar(patch_dim_);
        for (int pi = 0; pi < feature_.h; ++pi) {
            for (int pj = 0; pj < feature_.w; ++pj) {
                int p = pi * feature_.w + pj;
                gather_patch(image, pi, pj, patch);
                auto [mean, scale] = patch_stats(patch);
                for (int k = 0; k < d; ++k) {
                    double f = s.local[static_cast<size_t>(p) * d + k];
                    zbar[k] = fbar[static_cast<size_t>(p) * d + k] * (1.0 - f * f) * gain_;
                }
                for (int m = 0; m < patch_dim_; ++m) {
                    const double* row = &weight_[static_cast<size_t>(m) * d];
                    double acc = 0.0;
                    for (int k = 0; k < d; ++k) acc += zbar[k] * row[k];
                    pnbar[m] = acc;
                }
                double mean_g = 0.0, mean_gp = 0.0;
                for (int m = 0; m < patch_dim_; ++m) {
                    mean_g += pnbar[m];
                    mean_gp += pnbar[m] * (patch[m] - mean) / scale;
                }
                mean_g /= patch_dim_;
                mean_gp /= patch_dim_;
                int m = 0;
                for (int di = 0; di < ph_; ++di)
                    for (int dj = 0; dj < pw_; ++dj)
                        for (int ch = 0; ch < input_.c; ++ch, ++m) {
                            double centered = (patch[m] - mean) / scale;
                            gx.at(pi * ph_ + di, pj * pw_ + dj, ch) +=
                                (pnbar[m] - mean_g - centered * mean_gp) / scale;
                        }
            }
        }
        return gx;
    }

    double gain() const { return gain_; }
    double mix_gain() const { return mix_gain_; }
    const std::vector<double>& weight() const { return weight_; }
    const std::vector<double>& bias() const { return bias_; }
    const std::vector<double>& attn_query() const { return wq_; }
    const std::vector<double>& attn_key() const { return wk_; }
    const std::vector<double>& attn_value() const { return wv_; }
    const std::vector<double>& mix_bias() const { return mix_bias_; }

private:
    // per-call buffers for the two-stage forward
    struct Scratch {
        Scratch(int n, int d)
            : local(static_cast<size_t>(n) * d), query(static_cast<size_t>(n) * d),
              key(static_cast<size_t>(n) * d), value(static_cast<size_t>(n) * d),
              attn(static_cast<size_t>(n) * n) {}
        std::vector<double> local, query, key, value, attn;
    };

    void forward(const ImageTensor& image, Scratch& s, FeatureMap& mixed) const {
        check_input(image);
        const int d = feature_.c;
        const int n = tokens_;
        std::vector<double> patch(patch_dim_), z(d);
        for (int pi = 0; pi < feature_.h; ++pi) {
            for (int pj = 0; pj < feature_.w; ++pj) {
                int p = pi * feature_.w + pj;
                gather_patch(image, pi, pj, patch);
                auto [mean, scale] = patch_stats(patch);
                for (int k = 0; k < d; ++k) z[k] = bias_[k];
                for (int m = 0; m < patch_dim_; ++m) {
                    double val = (patch[m] - mean) / scale;
                    const double* row = &weight_[static_cast<size_t>(m) * d];
                    for (int k = 0; k < d; ++k) z[k] += val * row[k];
                }
                for (int k = 0; k < d; ++k)
                    s.local[static_cast<size_t>(p) * d + k] = std::tanh(gain_ * z[k]);
            }
        }

        // projections
        for (int p = 0; p < n; ++p) {
            const double* f = &s.local[static_cast<size_t>(p) * d];
            double* qp = &s.query[static_cast<size_t>(p) * d];
            double* kp = &s.key[static_cast<size_t>(p) * d];
            double* vp = &s.value[static_cast<size_t>(p) * d];
            for (int k2 = 0; k2 < d; ++k2) qp[k2] = kp[k2] = vp[k2] = 0.0;
            for (int k1 = 0; k1 < d; ++k1) {
                double x = f[k1];
                if (x == 0.0) continue;
                const double* wq = &wq_[static_cast<size_t>(k1) * d];
                const double* wk = &wk_[static_cast<size_t>(k1) * d];
                const double* wv = &wv_[static_cast<size_t>(k1) * d];
                for (int k2 = 0; k2 < d; ++k2) {
                    qp[k2] += x * wq[k2];
                    kp[k2] += x * wk[k2];
                    vp[k2] += x * wv[k2];
                }
            }
        }

        // softmax attention rows with max-subtraction
        double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        std::vector<double> scores(n);
        for (int p = 0; p < n; ++p) {
            const double* qp = &s.query[static_cast<size_t>(p) * d];
            double m = -1e300;
            for (int q = 0; q < n; ++q) {
                const double* kq = &s.key[static_cast<size_t>(q) * d];
                double acc = 0.0;
                for (int k = 0; k < d; ++k) acc += qp[k] * kq[k];
                scores[q] = acc * inv_sqrt_d;
                m = std::max(m, scores[q]);
            }
            double zsum = 0.0;
            double* arow = &s.attn[static_cast<size_t>(p) * n];
            for (int q = 0; q < n; ++q) {
                arow[q] = std::exp(scores[q] - m);
                zsum += arow[q];
            }
            for (int q = 0; q < n; ++q) arow[q] /= zsum;
        }

        // O = A V, then tanh
        for (int p = 0; p < n; ++p) {
            const double* arow = &s.attn[static_cast<size_t>(p) * n];
            for (int k = 0; k < d; ++k) {
                double acc = mix_bias_[k];
                for (int q = 0; q < n; ++q) acc += arow[q] * s.value[static_cast<size_t>(q) * d + k];
                mixed.v[static_cast<size_t>(p) * d + k] = std::tanh(mix_gain_ * acc);
            }
        }
    }

    void gather_patch(const ImageTensor& image, int pi, int pj, std::vector<double>& out) const {
        int m = 0;
        for (int di = 0; di < ph_; ++di)
            for (int dj = 0; dj < pw_; ++dj)
                for (int ch = 0; ch < input_.c; ++ch, ++m)
                    out[m] = image.at(pi * ph_ + di, pj * pw_ + dj, ch);
    }

    // per-patch standardization stats: mean and sqrt(var + eps)
    std::pair<double, double> patch_stats(const std::vector<double>& patch) const {
        double mean = 0.0;
        for (double x : patch) mean += x;
        mean /= patch_dim_;
        double sq = 0.0;
        for (double x : patch) sq += (x - mean) * (x - mean);
        return {mean, std::sqrt(sq / patch_dim_ + kPatchNormEps)};
    }

    void check_input(const ImageTensor& image) const {
        if (!(image.shape == input_))
            throw ContractError("encode: image shape " + to_string(image.shape) +
                                " does not match encoder input " + to_string(input_));
        if (!image.finite()) throw InvalidValueError("encode: non-finite image");
    }

    Shape3 input_, feature_;
    double gain_, mix_gain_;
    std::vector<double> weight_, bias_, wq_, wk_, wv_, mix_bias_;
    int ph_ = 0, pw_ = 0, patch_dim_ = 0, tokens_ = 0;
    std::string fingerprint_;
};

// ---------------------------------------------------------------------------
// Patch segmenter (decoder on top of the patch encoder)
// ---------------------------------------------------------------------------

namespace {

// Upsampled feature field plus norms; scratch for one decoder pass.
struct DecoderState {
    int H, W, d;
    std::vector<double> u;     // H*W*d, bilinear upsample of the feature map
    std::vector<double> su;    // H*W, sqrt(|u|^2 + eps)
    std::vector<double> g;     // d, raw prompt feature
    double sg = 0.0;
    std::vector<double> ng;    // d, normalized prompt feature
    std::vector<AxisTap> rows, cols;

    const double* u_at(int r, int c) const { return &u[(static_cast<size_t>(r) * W + c) * d]; }
    double* u_at(int r, int c) { return &u[(static_cast<size_t>(r) * W + c) * d]; }
};

DecoderState build_decoder_state(const FeatureMap& fm, Shape3 input, const Prompt& prompt) {
    DecoderState st;
    st.H = input.h;
    st.W = input.w;
    st.d = fm.shape.c;
    st.rows = make_axis_taps(fm.shape.h, input.h);
    st.cols = make_axis_taps(fm.shape.w, input.w);
    st.u.assign(static_cast<size_t>(st.H) * st.W * st.d, 0.0);
    st.su.assign(static_cast<size_t>(st.H) * st.W, 0.0);

    for (int r = 0; r < st.H; ++r) {
        const AxisTap& ar = st.rows[r];
        for (int c = 0; c < st.W; ++c) {
            const AxisTap& ac = st.cols[c];
            double w00 = (1 - ar.t) * (1 - ac.t), w01 = (1 - ar.t) * ac.t;
            double w10 = ar.t * (1 - ac.t), w11 = ar.t * ac.t;
            double* u = st.u_at(r, c);
            double sq = 0.0;
            for (int k = 0; k < st.d; ++k) {
                double val = w00 * fm.at(ar.lo, ac.lo, k) + w01 * fm.at(ar.lo, ac.hi, k) +
                             w10 * fm.at(ar.hi, ac.lo, k) + w11 * fm.at(ar.hi, ac.hi, k);
                u[k] = val;
                sq += val * val;
            }
            st.su[static_cast<size_t>(r) * st.W + c] = std::sqrt(sq + kNormEps);
        }
    }

    st.g.assign(st.d, 0.0);
    if (prompt.kind == PromptKind::point) {
        const double* u = st.u_at(prompt.row, prompt.col);
        for (int k = 0; k < st.d; ++k) st.g[k] = u[k];
    } else {
        int n = 0;
        for (int r = prompt.row_min; r <= prompt.row_max; ++r)
            for (int c = prompt.col_min; c <= prompt.col_max; ++c, ++n) {
                const double* u = st.u_at(r, c);
                for (int k = 0; k < st.d; ++k) st.g[k] += u[k];
            }
        for (int k = 0; k < st.d; ++k) st.g[k] /= n;
    }
    double gsq = 0.0;
    for (int k = 0; k < st.d; ++k) gsq += st.g[k] * st.g[k];
    st.sg = std::sqrt(gsq + kNormEps);
    st.ng.resize(st.d);
    for (int k = 0; k < st.d; ++k) st.ng[k] = st.g[k] / st.sg;
    return st;
}

}  // namespace

PatchSegmenter::PatchSegmenter(PatchSegmenterParams params)
    : encoder_(std::make_shared<PatchEncoder>(
          params.input_shape, params.feature_shape, params.tanh_gain, params.mix_gain,
          std::move(params.weight), std::move(params.bias), std::move(params.attn_query),
          std::move(params.attn_key), std::move(params.attn_value),
          std::move(params.mix_bias))),
      sim_scale_(params.sim_scale), sim_bias_(params.sim_bias) {}

const Encoder& PatchSegmenter::encoder() const { return *encoder_; }

EncoderHandle PatchSegmenter::encoder_handle() const { return encoder_; }

PatchSegmenterParams PatchSegmenter::params() const {
    PatchSegmenterParams snapshot;
    snapshot.input_shape = encoder_->input_shape();
    snapshot.feature_shape = encoder_->feature_shape();
    snapshot.tanh_gain = encoder_->gain();
    snapshot.mix_gain = encoder_->mix_gain();
    snapshot.sim_scale = sim_scale_;
    snapshot.sim_bias = sim_bias_;
    snapshot.weight = encoder_->weight();
    snapshot.bias = encoder_->bias();
    snapshot.attn_query = encoder_->attn_query();
    snapshot.attn_key = encoder_->attn_key();
    snapshot.attn_value = encoder_->attn_value();
    snapshot.mix_bias = encoder_->mix_bias();
    return snapshot;
}

MaskLogits PatchSegmenter::predict_mask(const ImageTensor& image, const Prompt& prompt) const {
    Shape3 in = encoder_->input_shape();
    validate_prompt(prompt, in.h, in.w);
    FeatureMap fm = encoder_->encode(image);
    DecoderState st = build_decoder_state(fm, in, prompt);

    MaskLogits logits(in.h, in.w);
    for (int r = 0; r < in.h; ++r) {
        for (int c = 0; c < in.w; ++c) {
            const double* u = st.u_at(r, c);
            double dot = 0.0;
            for (int k = 0; k < st.d; ++k) dot += u[k] * st.ng[k];
            dot /= st.su[static_cast<size_t>(r) * in.w + c];
            logits.at(r, c) = sim_scale_ * dot - sim_bias_;
        }
    }
    return logits;
}

ImageTensor PatchSegmenter::predict_mask_vjp(const ImageTensor& image, const Prompt& prompt,
                                             const MaskLogits& grad_logits) const {
    Shape3 in = encoder_->input_shape();
    validate_prompt(prompt, in.h, in.w);
    if (grad_logits.h != in.h || grad_logits.w != in.w)
        throw ContractError("predict_mask_vjp: gradient shape mismatch");

    FeatureMap fm = encoder_->encode(image);
    DecoderState st = build_decoder_state(fm, in, prompt);
    const int d = st.d;

    std::vector<double> ubar(st.u.size(), 0.0);
    std::vector<double> gbar(d, 0.0);
    std::vector<double> nu(d);
    for (int r = 0; r < in.h; ++r) {
        for (int c = 0; c < in.w; ++c) {
            double l = grad_logits.at(r, c);
            if (l == 0.0) continue;
            const double* u = st.u_at(r, c);
            double su = st.su[static_cast<size_t>(r) * in.w + c];
            double dot = 0.0;
            for (int k = 0; k < d; ++k) {
                nu[k] = u[k] / su;
                dot += nu[k] * st.ng[k];
            }
            double s = sim_scale_ * l;
            double* ub = &ubar[(static_cast<size_t>(r) * in.w + c) * d];
            for (int k = 0; k < d; ++k) {
                ub[k] += s * (st.ng[k] - nu[k] * dot) / su;
                gbar[k] += s * (nu[k] - st.ng[k] * dot) / st.sg;
            }
        }
    }

    // route the prompt-feature gradient back into the upsampled field
    if (prompt.kind == PromptKind::point) {
        double* ub = &ubar[(static_cast<size_t>(prompt.row) * in.w + prompt.col) * d];
        for (int k = 0; k < d; ++k) ub[k] += gbar[k];
    } else {
        int n = (prompt.row_max - prompt.row_min + 1) * (prompt.col_max - prompt.col_min + 1);
        for (int r = prompt.row_min; r <= prompt.row_max; ++r)
            for (int c = prompt.col_min; c <= prompt.col_max; ++c) {
                double* ub = &ubar[(static_cast<size_t>(r) * in.w + c) * d];
                for (int k = 0; k < d; ++k) ub[k] += gbar[k] / n;
            }
    }

    // transpose of the bilinear upsampling
    FeatureMap fbar(encoder_->feature_shape());
    for (int r = 0; r < in.h; ++r) {
        const AxisTap& ar = st.rows[r];
        for (int c = 0; c < in.w; ++c) {
            const AxisTap& ac = st.cols[c];
            const double* ub = &ubar[(static_cast<size_t>(r) * in.w + c) * d];
            double w00 = (1 - ar.t) * (1 - ac.t), w01 = (1 - ar.t) * ac.t;
            double w10 = ar.t * (1 - ac.t), w11 = ar.t * ac.t;
            for (int k = 0; k < d; ++k) {
                double v = ub[k];
                if (v == 0.0) continue;
                fbar.at(ar.lo, ac.lo, k) += w00 * v;
                fbar.at(ar.lo, ac.hi, k) += w01 * v;
                fbar.at(ar.hi, ac.lo, k) += w10 * v;
                fbar.at(ar.hi, ac.hi, k) += w11 * v;
            }
        }
    }

    return encoder_->encode_vjp(image, fbar);
}

std::shared_ptr<const PatchSegmenter> make_toy_segmenter(uint64_t seed, Shape3 input_shape,
                                                         Shape3 feature_shape) {
    PatchSegmenterParams p;
    p.input_shape = input_shape;
    p.feature_shape = feature_shape;
    if (input_shape.h <= 0 || input_shape.w <= 0 || input_shape.c <= 0 || feature_shape.h <= 0 ||
        feature_shape.w <= 0 || feature_shape.c <= 0)
        throw ContractError("make_toy_segmenter: shapes must be positive");
    if (input_shape.h % feature_shape.h != 0 || input_shape.w % feature_shape.w != 0)
        throw ContractError("make_toy_segmenter: feature grid must tile the input");

    const int d = feature_shape.c;
    int patch_dim = (input_shape.h / feature_shape.h) * (input_shape.w / feature_shape.w) *
                    input_shape.c;
    double scale = 1.0 / std::sqrt(static_cast<double>(patch_dim));
    // large enough that attention rows are selective on structured inputs
    double proj_scale = 5.0 / std::sqrt(static_cast<double>(d));
    Rng rng(seed);
    p.weight.resize(static_cast<size_t>(patch_dim) * d);
    for (double& w : p.weight) w = rng.uniform(-scale, scale);
    p.bias.resize(d);
    for (double& b : p.bias) b = rng.uniform(-0.25, 0.25);
    auto draw_proj = [&](std::vector<double>& w) {
        w.resize(static_cast<size_t>(d) * d);
        for (double& x : w) x = rng.uniform(-proj_scale, proj_scale);
    };
    draw_proj(p.attn_query);
    draw_proj(p.attn_key);
    draw_proj(p.attn_value);
    p.mix_bias.resize(d);
    for (double& b : p.mix_bias) b = rng.uniform(-0.25, 0.25);
    return std::make_shared<PatchSegmenter>(std::move(p));
}

// ---------------------------------------------------------------------------
// SEG1 container
// ---------------------------------------------------------------------------

namespace {

void write_u32le(std::ostream& os, uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                          static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_segmenter(const PatchSegmenter& seg, const std::string& path) {
    PatchSegmenterParams p = seg.params();
    nlohmann::json header = {
        {"variant", "patch_attn"},
        {"input_shape", {p.input_shape.h, p.input_shape.w, p.input_shape.c}},
        {"feature_shape", {p.feature_shape.h, p.feature_shape.w, p.feature_shape.c}},
        {"tanh_gain", p.tanh_gain},
        {"mix_gain", p.mix_gain},
        {"sim_scale", p.sim_scale},
        {"sim_bias", p.sim_bias},
        {"dtype", "f64"},
    };
    std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write segmenter checkpoint: " + path);
    os.write("SEG1", 4);
    write_u32le(os, static_cast<uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    auto write_block = [&os](const std::vector<double>& block) {
        os.write(reinterpret_cast<const char*>(block.data()),
                 static_cast<std::streamsize>(block.size() * sizeof(double)));
    };
    write_block(p.weight);
    write_block(p.bias);
    write_block(p.attn_query);
    write_block(p.attn_key);
    write_block(p.attn_value);
    write_block(p.mix_bias);
    if (!os) throw IoError("failed writing segmenter checkpoint: " + path);
}

SegmenterHandle load_external_segmenter(const ModelDescriptor& desc) {
    if (desc.device != "cpu" && !desc.device.empty())
        throw ConfigError("unsupported device '" + desc.device + "' (only cpu is available)");
    if (desc.variant == "sam_vit_b" || desc.variant == "sam_vit_l" || desc.variant == "sam_vit_h")
        throw ConfigError("variant '" + desc.variant +
                          "' requires a SEG1 export of the checkpoint; see README for the "
                          "paper-scale workflow");
    if (desc.variant != "patch_attn" && desc.variant != "toy")
        throw ConfigError("unsupported model variant: '" + desc.variant + "'");

    std::ifstream is(desc.checkpoint_path, std::ios::binary);
    if (!is) throw IoError("cannot open model checkpoint: " + desc.checkpoint_path);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SEG1", 4) != 0)
        throw FormatError("not a SEG1 checkpoint: " + desc.checkpoint_path);
    uint32_t hlen = read_u32le(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    if (!is) throw FormatError("truncated SEG1 header: " + desc.checkpoint_path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad SEG1 header in " + desc.checkpoint_path + ": " + e.what());
    }

    PatchSegmenterParams p;
    try {
        auto in = header.at("input_shape");
        auto fs = header.at("feature_shape");
        p.input_shape = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
        p.feature_shape = {fs.at(0).get<int>(), fs.at(1).get<int>(), fs.at(2).get<int>()};
        p.tanh_gain = header.at("tanh_gain").get<double>();
        p.mix_gain = header.at("mix_gain").get<double>();
        p.sim_scale = header.at("sim_scale").get<double>();
        p.sim_bias = header.at("sim_bias").get<double>();
        if (header.at("dtype").get<std::string>() != "f64")
            throw FormatError("SEG1 dtype must be f64");
        if (header.at("variant").get<std::string>() != "patch_attn")
            throw ConfigError("unsupported checkpoint variant in " + desc.checkpoint_path);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad SEG1 header in " + desc.checkpoint_path + ": " + e.what());
    }

    int patch_dim = (p.input_shape.h / p.feature_shape.h) * (p.input_shape.w / p.feature_shape.w) *
                    p.input_shape.c;
    size_t d = static_cast<size_t>(p.feature_shape.c);
    p.weight.resize(static_cast<size_t>(patch_dim) * d);
    p.bias.resize(d);
    p.attn_query.resize(d * d);
    p.attn_key.resize(d * d);
    p.attn_value.resize(d * d);
    p.mix_bias.resize(d);
    auto read_block = [&is](std::vector<double>& block) {
        is.read(reinterpret_cast<char*>(block.data()),
                static_cast<std::streamsize>(block.size() * sizeof(double)));
    };
    read_block(p.weight);
    read_block(p.bias);
    read_block(p.attn_query);
    read_block(p.attn_key);
    read_block(p.attn_value);
    read_block(p.mix_bias);
    if (!is) throw FormatError("truncated SEG1 payload: " + desc.checkpoint_path);
    is.peek();
    if (!is.eof()) throw FormatError("trailing bytes in SEG1 file: " + desc.checkpoint_path);

    return std::make_shared<PatchSegmenter>(std::move(p));
}

}  // namespace uap
