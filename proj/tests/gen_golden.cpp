// Regenerates the golden snapshot files the unit tests compare against.
// Run once after an intentional change to the toy encoder or fixtures:
//   ./gen_golden <golden-dir>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "uap/cl_attack.hpp"
#include "uap/encoders.hpp"
#include "uap/eval.hpp"
#include "uap/fixtures.hpp"

using namespace uap;

int main(int argc, char** argv) {
    if (argc != 2) {
        std::fprintf(stderr, "usage: gen_golden <golden-dir>\n");
        return 2;
    }
    std::filesystem::create_directories(argv[1]);
    std::string dir = argv[1];

    {
        auto seg = make_toy_segmenter(7);
        FeatureMap fm = seg->encoder().encode(ImageTensor(64, 64, 3));
        std::ofstream os(dir + "/encode_zeros_seed7.txt");
        os << fm.shape.h << " " << fm.shape.w << " " << fm.shape.c << "\n";
        char buf[40];
        for (double x : fm.v) {
            std::snprintf(buf, sizeof buf, "%a", x);
            os << buf << "\n";
        }
        std::printf("wrote %s/encode_zeros_seed7.txt\n", dir.c_str());
    }

    {
        auto seg = make_toy_segmenter(7);
        ImageSource test = synthetic_corpus(300, 20);
        Uap v = init_uap({64, 64, 3}, 10.0 / 255.0, UapInit::uniform, 11);
        EvalConfig cfg;
        cfg.seed = 3;
        EvalReport report = evaluate_uap(*seg, v, test, cfg);
        std::ofstream os(dir + "/eval_miou_golden.txt");
        char buf[40];
        std::snprintf(buf, sizeof buf, "%a", report.miou_percent);
        os << buf << "\n";
        std::printf("wrote %s/eval_miou_golden.txt (miou=%.4f)\n", dir.c_str(),
                    report.miou_percent);
    }
    return 0;
}
