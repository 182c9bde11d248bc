#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "uap/tensor.hpp"

namespace uap {

// Ordered, immutable pool of same-shape images. Built either from a directory
// (deterministic lexicographic order) or from in-memory synthetic fixtures.
class ImageSource {
public:
    struct Item {
        std::string id;
        std::string canonical_path;  // empty for synthetic images
        ImageTensor image;
    };

    ImageSource() = default;
    explicit ImageSource(std::vector<Item> items) : items_(std::move(items)) {}

    size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const ImageTensor& image(size_t i) const { return items_[i].image; }
    const std::string& id(size_t i) const { return items_[i].id; }
    const std::string& canonical_path(size_t i) const { return items_[i].canonical_path; }

    ImageSource prefix(size_t n) const {
        std::vector<Item> head(items_.begin(), items_.begin() + std::min(n, items_.size()));
        return ImageSource(std::move(head));
    }

private:
    std::vector<Item> items_;
};

struct IngestResult {
    ImageSource source;
    std::vector<std::string> skipped;  // undecodable files, for the manifest
};

// Decode every image in dir (lexicographic by filename), resize to
// target_shape, scale to [0,1]. Undecodable files are skipped and listed;
// an empty usable set is a ConfigError.
IngestResult ingest_corpus(const std::string& dir, Shape3 target_shape);

// True if any file of `candidate` resolves into one of `claimed_dirs`
// (canonical paths). Used to keep train/bank/test corpora disjoint.
bool corpus_overlaps_dirs(const ImageSource& candidate, const std::vector<std::string>& claimed_dirs);

}  // namespace uap
