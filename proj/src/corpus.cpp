#include "uap/corpus.hpp"

#include <algorithm>
#include <filesystem>

#include "uap/errors.hpp"
#include "uap/image_io.hpp"

namespace fs = std::filesystem;

namespace uap {

IngestResult ingest_corpus(const std::string& dir, Shape3 target_shape) {
    if (!fs::is_directory(dir)) throw ConfigError("corpus directory not found: " + dir);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

    IngestResult result;
    std::vector<ImageSource::Item> items;
    for (const auto& f : files) {
        try {
            ImageTensor img = read_image(f.string());
            if (img.shape.h != target_shape.h || img.shape.w != target_shape.w)
                img = resize_bilinear(img, target_shape.h, target_shape.w);
            items.push_back({f.filename().string(), fs::canonical(f).string(), std::move(img)});
        } catch (const Error&) {
            result.skipped.push_back(f.filename().string());
        }
    }
    if (items.empty())
        throw ConfigError("no decodable images in corpus directory: " + dir);
    result.source = ImageSource(std::move(items));
    return result;
}

bool corpus_overlaps_dirs(const ImageSource& candidate, const std::vector<std::string>& claimed_dirs) {
    std::vector<std::string> dirs;
    for (const auto& d : claimed_dirs) {
        if (d.empty()) continue;
        std::error_code ec;
        fs::path canon = fs::canonical(d, ec);
        if (!ec) dirs.push_back(canon.string());
    }
    if (dirs.empty()) return false;
    for (size_t i = 0; i < candidate.size(); ++i) {
        const std::string& p = candidate.canonical_path(i);
        if (p.empty()) continue;
        std::string parent = fs::path(p).parent_path().string();
        for (const auto& d : dirs)
            if (parent == d) return true;
    }
    return false;
}

}  // namespace uap
