#include "uap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "uap/errors.hpp"
#include "uap/image_io.hpp"
#include "uap/ops.hpp"
#include "uap/rng.hpp"
#include "uap/uap_io.hpp"

namespace fs = std::filesystem;

namespace uap {

namespace {

std::string fmt(const char* spec, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, x);
    return buf;
}

Prompt draw_point_prompt(const ImageTensor& img, Rng& rng, bool foreground_only) {
    const int h = img.shape.h, w = img.shape.w;
    if (!foreground_only)
        return Prompt::point(static_cast<int>(rng.below(h)), static_cast<int>(rng.below(w)));

    // foreground = pixels brighter than the image's mean luminance
    std::vector<int> candidates;
    double mean = 0.0;
    std::vector<double> lum(static_cast<size_t>(h) * w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double l = 0.0;
            for (int k = 0; k < img.shape.c; ++k) l += img.at(i, j, k);
            lum[static_cast<size_t>(i) * w + j] = l;
            mean += l;
        }
    mean /= static_cast<double>(h) * w;
    for (size_t i = 0; i < lum.size(); ++i)
        if (lum[i] > mean) candidates.push_back(static_cast<int>(i));
    if (candidates.empty())
        return Prompt::point(static_cast<int>(rng.below(h)), static_cast<int>(rng.below(w)));
    int pick = candidates[static_cast<size_t>(rng.below(candidates.size()))];
    return Prompt::point(pick / w, pick % w);
}

Prompt draw_box_prompt(const ImageTensor& img, Rng& rng) {
    const int h = img.shape.h, w = img.shape.w;
    int hr = h / 8 + static_cast<int>(rng.below(h / 4));  // half-height
    int hc = w / 8 + static_cast<int>(rng.below(w / 4));
    int cr = hr + static_cast<int>(rng.below(h - 2 * hr));
    int cc = hc + static_cast<int>(rng.below(w - 2 * hc));
    return Prompt::box(cr - hr, cc - hc, cr + hr, cc + hc);
}

Prompt draw_prompt(const ImageTensor& img, Rng& rng, const EvalConfig& config) {
    if (config.prompt_kind == PromptKind::point)
        return draw_point_prompt(img, rng, config.foreground_points);
    return draw_box_prompt(img, rng);
}

std::string digest_of(const nlohmann::json& j) {
    std::string s = j.dump();
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

EvalReport evaluate_perturbation(const Segmenter& segmenter, const Array3& v,
                                 const ImageSource& test, const EvalConfig& config) {
    if (test.empty()) throw ConfigError("evaluate_uap: empty test corpus");
    if (config.n_images < 1 || config.prompts_per_image < 1)
        throw ContractError("evaluate_uap: n_images and prompts_per_image must be >= 1");
    const Shape3 shape = segmenter.encoder().input_shape();
    if (!(v.shape == shape))
        throw ContractError("evaluate_uap: perturbation shape " + to_string(v.shape) +
                            " does not match segmenter input " + to_string(shape));

    size_t n = std::min<size_t>(config.n_images, test.size());
    Rng rng(config.seed);

    EvalReport report;
    report.per_image.reserve(n * config.prompts_per_image);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const ImageTensor& img = test.image(i);
        ImageTensor adv(shape);
        for (size_t p = 0; p < adv.v.size(); ++p) adv.v[p] = img.v[p] + v.v[p];
        if (config.clamp_adv) adv = clamp_pixels(adv);

        for (int p = 0; p < config.prompts_per_image; ++p) {
            Prompt prompt = draw_prompt(img, rng, config);
            BinaryMask clean = binarize_mask(segmenter.predict_mask(img, prompt));
            BinaryMask attacked = binarize_mask(segmenter.predict_mask(adv, prompt));
            double value = iou(clean, attacked);
            total += value;
            report.per_image.push_back({test.id(i), prompt, value});
        }
    }
    report.miou_percent = 100.0 * total / static_cast<double>(report.per_image.size());

    nlohmann::json cfg = {
        {"n_images", config.n_images},
        {"prompt_kind", config.prompt_kind == PromptKind::point ? "point" : "box"},
        {"prompts_per_image", config.prompts_per_image},
        {"seed", config.seed},
        {"clamp_adv", config.clamp_adv},
        {"foreground_points", config.foreground_points},
    };
    report.config_digest = digest_of(cfg);
    return report;
}

}  // namespace

EvalReport evaluate_uap(const Segmenter& segmenter, const Uap& uap, const ImageSource& test,
                        const EvalConfig& config) {
    // a UAP must not be evaluated on images it was trained or banked against
    std::vector<std::string> dirs;
    for (const char* key : {"aug_corpus_dir", "train_corpus_dir", "bank_corpus_dirs"}) {
        auto it = uap.meta.find(key);
        if (it == uap.meta.end()) continue;
        size_t start = 0;
        while (start <= it->second.size()) {
            size_t end = it->second.find(';', start);
            if (end == std::string::npos) end = it->second.size();
            if (end > start) dirs.push_back(it->second.substr(start, end - start));
            start = end + 1;
        }
    }
    if (corpus_overlaps_dirs(test, dirs))
        throw ConfigError("evaluate_uap: test corpus overlaps the UAP's training corpus");

    EvalReport report = evaluate_perturbation(segmenter, uap.data, test, config);
    report.uap_meta = uap.meta;
    return report;
}

EvalReport random_noise_baseline(const Segmenter& segmenter, const ImageSource& test,
                                 const EvalConfig& config, double epsilon, uint64_t noise_seed) {
    if (epsilon < 0.0) throw ContractError("random_noise_baseline: epsilon must be >= 0");
    const Shape3 shape = segmenter.encoder().input_shape();
    Array3 noise(shape);
    Rng rng = Rng::stream(noise_seed, 7);
    for (double& x : noise.v) x = epsilon > 0.0 ? rng.uniform(-epsilon, epsilon) : 0.0;
    EvalReport report = evaluate_perturbation(segmenter, noise, test, config);
    report.uap_meta["method"] = "uniform_noise";
    report.uap_meta["epsilon"] = std::to_string(epsilon);
    report.uap_meta["seed"] = std::to_string(noise_seed);
    return report;
}

CosineAnalysis cosine_analysis(const Encoder& encoder, const Uap& uap, const ImageSource& corpus,
                               double weight, uint64_t seed, int draws) {
    if (corpus.size() < 2) throw ContractError("cosine_analysis: corpus needs >= 2 images");
    if (draws < 1) throw ContractError("cosine_analysis: draws must be >= 1");
    const Shape3 shape = encoder.input_shape();
    if (!(uap.data.shape == shape))
        throw ContractError("cosine_analysis: UAP shape does not match the encoder");

    Embedding e_uap = embed(encoder.encode(uap.data));
    Rng rng(seed);
    CosineAnalysis acc{0.0, 0.0, 0.0, 0.0};
    for (int t = 0; t < draws; ++t) {
        size_t i = static_cast<size_t>(rng.below(corpus.size()));
        size_t j2 = static_cast<size_t>(rng.below(corpus.size() - 1));
        size_t j = j2 >= i ? j2 + 1 : j2;  // distinct second image
        const ImageTensor& x = corpus.image(i);

        Array3 pos(shape);
        Array3 adv(shape);
        for (size_t p = 0; p < pos.v.size(); ++p) {
            pos.v[p] = uap.data.v[p] + weight * x.v[p];
            adv.v[p] = x.v[p] + uap.data.v[p];
        }
        adv = clamp_pixels(adv);

        Embedding e_x = embed(encoder.encode(x));
        acc.positive_pair += cosine_similarity(e_uap, embed(encoder.encode(pos)));
        acc.negative_pair += cosine_similarity(e_uap, e_x);
        acc.adv_clean_pair += cosine_similarity(embed(encoder.encode(adv)), e_x);
        acc.random_pair += cosine_similarity(e_x, embed(encoder.encode(corpus.image(j))));
    }
    acc.positive_pair /= draws;
    acc.negative_pair /= draws;
    acc.adv_clean_pair /= draws;
    acc.random_pair /= draws;
    return acc;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

std::string to_string(SweepKind kind) {
    switch (kind) {
        case SweepKind::augmentation: return "augmentation";
        case SweepKind::weight: return "weight";
        case SweepKind::temperature: return "temperature";
        case SweepKind::negatives: return "negatives";
    }
    return "?";
}

SweepKind sweep_kind_from_string(const std::string& name) {
    if (name == "augmentation") return SweepKind::augmentation;
    if (name == "weight") return SweepKind::weight;
    if (name == "temperature") return SweepKind::temperature;
    if (name == "negatives") return SweepKind::negatives;
    throw ConfigError("unknown sweep kind: '" + name + "'");
}

std::vector<std::string> default_sweep_grid(SweepKind kind) {
    switch (kind) {
        case SweepKind::augmentation:
            return {"crop_resize", "cutout", "uniform_noise", "color_shift", "add_image"};
        case SweepKind::weight: {
            std::vector<std::string> grid;
            for (int i = 2; i <= 20; ++i) grid.push_back(fmt("%.1f", i / 10.0));
            return grid;
        }
        case SweepKind::temperature:
            return {"0.005", "0.01", "0.05", "0.1", "0.5", "1"};
        case SweepKind::negatives:
            return {"1", "2", "5", "10", "20", "50", "100"};
    }
    return {};
}

SweepTable run_sweep(SweepKind kind, const std::vector<std::string>& grid,
                     const SweepInputs& inputs) {
    if (grid.empty()) throw ContractError("run_sweep: empty grid");
    if (!inputs.segmenter || !inputs.bank || !inputs.aug_corpus || !inputs.test_corpus)
        throw ContractError("run_sweep: missing inputs");

    SweepTable table;
    table.kind = kind;
    table.all_ok = true;
    if (!inputs.out_dir.empty()) fs::create_directories(inputs.out_dir + "/cells");

    for (const std::string& setting : grid) {
        SweepCell cell;
        cell.setting = setting;
        try {
            CLConfig cfg = inputs.base;
            switch (kind) {
                case SweepKind::augmentation:
                    cfg.augment.kind = augment_kind_from_string(setting);
                    cfg.augment.rows = cfg.augment.cols = 0;  // re-derive the default window
                    break;
                case SweepKind::weight:
                    cfg.augment.kind = AugmentKind::add_image;
                    cfg.augment.weight = std::stod(setting);
                    break;
                case SweepKind::temperature:
                    cfg.tau = std::stod(setting);
                    break;
                case SweepKind::negatives:
                    cfg.k = std::stoi(setting);
                    break;
            }
            const Encoder& encoder = inputs.segmenter->encoder();
            CLTrainResult trained = train_uap_cl(encoder, *inputs.aug_corpus, *inputs.bank, cfg);
            EvalReport report =
                evaluate_uap(*inputs.segmenter, trained.uap, *inputs.test_corpus, inputs.eval);
            cell.miou_percent = report.miou_percent;
            cell.ok = true;
            if (!inputs.out_dir.empty()) {
                std::string stem = inputs.out_dir + "/cells/" + to_string(kind) + "_" + setting;
                save_uap(trained.uap, stem + ".uap1");
                write_report_csv(report, stem + ".csv");
            }
        } catch (const std::exception& e) {
            cell.ok = false;
            cell.error = e.what();
            table.all_ok = false;
        }
        table.cells.push_back(std::move(cell));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Overlays
// ---------------------------------------------------------------------------

namespace {

void paint_pixel(ImageTensor& canvas, int r, int c, int c0, const double rgb[3]) {
    if (r < 0 || r >= canvas.shape.h || c0 + c < 0 || c0 + c >= canvas.shape.w) return;
    for (int k = 0; k < 3; ++k) canvas.at(r, c0 + c, k) = rgb[k];
}

void draw_prompt_marker(ImageTensor& canvas, const Prompt& prompt, int c0) {
    static constexpr double kGreen[3] = {0.0, 1.0, 0.0};
    if (prompt.kind == PromptKind::point) {
        for (int d = -3; d <= 3; ++d) {
            paint_pixel(canvas, prompt.row + d, prompt.col, c0, kGreen);
            paint_pixel(canvas, prompt.row, prompt.col + d, c0, kGreen);
        }
    } else {
        for (int r = prompt.row_min; r <= prompt.row_max; ++r) {
            paint_pixel(canvas, r, prompt.col_min, c0, kGreen);
            paint_pixel(canvas, r, prompt.col_max, c0, kGreen);
        }
        for (int c = prompt.col_min; c <= prompt.col_max; ++c) {
            paint_pixel(canvas, prompt.row_min, c, c0, kGreen);
            paint_pixel(canvas, prompt.row_max, c, c0, kGreen);
        }
    }
}

void blit(ImageTensor& canvas, const ImageTensor& tile, int c0) {
    for (int i = 0; i < tile.shape.h; ++i)
        for (int j = 0; j < tile.shape.w; ++j)
            for (int k = 0; k < 3; ++k) canvas.at(i, c0 + j, k) = tile.at(i, j, k);
}

ImageTensor mask_to_image(const BinaryMask& mask) {
    ImageTensor img(mask.h, mask.w, 3);
    for (int i = 0; i < mask.h; ++i)
        for (int j = 0; j < mask.w; ++j)
            for (int k = 0; k < 3; ++k) img.at(i, j, k) = mask.at(i, j) ? 1.0 : 0.0;
    return img;
}

}  // namespace

std::vector<std::string> emit_overlays(const Segmenter& segmenter, const Uap& uap,
                                       const ImageSource& images,
                                       const std::vector<Prompt>& prompts,
                                       const std::string& out_dir, bool clamp_adv) {
    if (prompts.empty()) throw ContractError("emit_overlays: no prompts given");
    const Shape3 shape = segmenter.encoder().input_shape();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) throw IoError("cannot create overlay directory: " + out_dir);

    const int sep = 2;
    std::vector<std::string> emitted;
    for (size_t i = 0; i < images.size(); ++i) {
        const ImageTensor& img = images.image(i);
        ImageTensor adv(shape);
        for (size_t p = 0; p < adv.v.size(); ++p) adv.v[p] = img.v[p] + uap.data.v[p];
        if (clamp_adv) adv = clamp_pixels(adv);

        for (size_t pi = 0; pi < prompts.size(); ++pi) {
            const Prompt& prompt = prompts[pi];
            validate_prompt(prompt, shape.h, shape.w);
            BinaryMask clean = binarize_mask(segmenter.predict_mask(img, prompt));
            BinaryMask attacked = binarize_mask(segmenter.predict_mask(adv, prompt));

            ImageTensor panel(shape.h, 4 * shape.w + 3 * sep, 3);
            for (double& x : panel.v) x = 0.5;
            blit(panel, img, 0);
            draw_prompt_marker(panel, prompt, 0);
            blit(panel, adv, shape.w + sep);
            draw_prompt_marker(panel, prompt, shape.w + sep);
            blit(panel, mask_to_image(clean), 2 * (shape.w + sep));
            blit(panel, mask_to_image(attacked), 3 * (shape.w + sep));

            char name[128];
            std::snprintf(name, sizeof name, "%s_p%02zu.ppm", images.id(i).c_str(), pi);
            std::string path = out_dir + "/" + name;
            write_image_ppm(panel, path);
            emitted.push_back(path);
        }
    }
    return emitted;
}

// ---------------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------------

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write report: " + path);
    os << "image_id,prompt_kind,row,col,iou\n";
    for (const PerImageResult& row : report.per_image) {
        bool point = row.prompt.kind == PromptKind::point;
        os << row.image_id << "," << (point ? "point" : "box") << ","
           << (point ? row.prompt.row : row.prompt.row_min) << ","
           << (point ? row.prompt.col : row.prompt.col_min) << "," << fmt("%.12g", row.iou_value)
           << "\n";
    }
    os << "# miou_percent," << fmt("%.2f", report.miou_percent) << "\n";
    if (!os) throw IoError("failed writing report: " + path);
}

void write_sweep_csv(const SweepTable& table, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write sweep table: " + path);
    os << "setting,miou_percent\n";
    for (const SweepCell& cell : table.cells) {
        if (cell.ok)
            os << cell.setting << "," << fmt("%.2f", cell.miou_percent) << "\n";
        else
            os << cell.setting << ",failed\n";
    }
    if (!os) throw IoError("failed writing sweep table: " + path);
}

bool write_sweep_svg(const SweepTable& table, const std::string& path) {
    std::vector<const SweepCell*> ok;
    for (const SweepCell& c : table.cells)
        if (c.ok) ok.push_back(&c);
    if (ok.empty()) return false;

    const double width = 640, height = 400, ml = 60, mr = 20, mt = 40, mb = 60;
    double lo = 0.0, hi = 100.0;
    for (const SweepCell* c : ok) hi = std::max(hi, c->miou_percent);

    auto xpos = [&](size_t i) {
        return ok.size() == 1 ? ml + (width - ml - mr) / 2
                              : ml + (width - ml - mr) * static_cast<double>(i) /
                                    static_cast<double>(ok.size() - 1);
    };
    auto ypos = [&](double v) { return height - mb - (height - mt - mb) * (v - lo) / (hi - lo); };

    std::ofstream os(path, std::ios::binary);
    if (!os) return false;
    os << "<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 " << width << " " << height
       << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << width / 2 << "' y='20' text-anchor='middle' font-size='16'>mIoU (%) vs "
       << to_string(table.kind) << "</text>\n";
    os << "<line x1='" << ml << "' y1='" << height - mb << "' x2='" << width - mr << "' y2='"
       << height - mb << "' stroke='black'/>\n";
    os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << height - mb
       << "' stroke='black'/>\n";
    for (int g = 0; g <= 5; ++g) {
        double v = lo + (hi - lo) * g / 5.0;
        os << "<text x='" << ml - 8 << "' y='" << ypos(v) + 4
           << "' text-anchor='end' font-size='10'>" << fmt("%.0f", v) << "</text>\n";
    }
    os << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
    for (size_t i = 0; i < ok.size(); ++i) os << xpos(i) << "," << ypos(ok[i]->miou_percent) << " ";
    os << "'/>\n";
    for (size_t i = 0; i < ok.size(); ++i) {
        os << "<circle cx='" << xpos(i) << "' cy='" << ypos(ok[i]->miou_percent)
           << "' r='3' fill='steelblue'/>\n";
        os << "<text x='" << xpos(i) << "' y='" << height - mb + 16
           << "' text-anchor='middle' font-size='10'>" << ok[i]->setting << "</text>\n";
    }
    os << "</svg>\n";
    return static_cast<bool>(os);
}

void write_loss_csv(const std::vector<TraceRow>& trace, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write loss trace: " + path);
    os << "iteration,loss,qk_pos,qk_neg_mean\n";
    for (const TraceRow& row : trace)
        os << row.iteration << "," << fmt("%.12g", row.loss) << "," << fmt("%.12g", row.s_pos)
           << "," << fmt("%.12g", row.mean_s_neg) << "\n";
    if (!os) throw IoError("failed writing loss trace: " + path);
}

}  // namespace uap
