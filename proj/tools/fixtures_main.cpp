// uap-fixtures: write synthetic two-blob PPM corpora for desk-scale runs.

#include <cstdio>

#include <CLI11.hpp>

#include "uap/fixtures.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic corpus generator"};
    std::string out;
    uint64_t seed = 0;
    int count = 20;
    int height = 64, width = 64;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--seed", seed, "corpus seed");
    app.add_option("--count", count, "number of images");
    app.add_option("--height", height, "image height");
    app.add_option("--width", width, "image width");
    CLI11_PARSE(app, argc, argv);

    try {
        uap::write_synthetic_corpus(out, seed, count, {height, width, 3});
        std::printf("wrote %d images to %s\n", count, out.c_str());
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
