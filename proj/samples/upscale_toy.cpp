// Builds a small DRN, trains it briefly on one synthetic image, and writes the
// bicubic and network upscales side by side for a visual check.
//
//   drn_sample <out_dir> [iterations]

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "drn/degradation.hpp"
#include "drn/evaluation.hpp"
#include "drn/model.hpp"
#include "drn/png.hpp"
#include "drn/training.hpp"

namespace {

drn::Tensor checker_scene(std::int64_t size) {
    drn::Tensor img(drn::Shape{1, 3, size, size});
    auto d = img.mutable_data();
    for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x) {
            const bool check = ((x / 6) + (y / 6)) % 2 == 0;
            const double ring = 0.5 + 0.5 * std::sin(0.02 * double((x - size / 2) * (x - size / 2) + (y - size / 2) * (y - size / 2)));
            d[(0 * size + y) * size + x] = check ? 0.9f : 0.1f;
            d[(1 * size + y) * size + x] = static_cast<float>(ring);
            d[(2 * size + y) * size + x] = static_cast<float>(double(x) / size);
        }
    return img;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: drn_sample <out_dir> [iterations]\n";
        return 1;
    }
    const std::filesystem::path out = argv[1];
    const std::int64_t iterations = argc > 2 ? std::atoll(argv[2]) : 300;
    std::filesystem::create_directories(out);

    const drn::Tensor hr = checker_scene(96);
    const drn::ImagePair pair = drn::make_pair_from_hr("scene", hr, drn::DegradationKernel::bicubic(2));

    drn::DrnModel model = drn::build(drn::DrnConfig::preset("drn-t", 2), 1);
    drn::TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.batch = 4;
    cfg.patch = 24;
    cfg.lr_start = 1e-3;
    cfg.lr_end = 1e-5;
    drn::train_paired({pair}, model, cfg, drn::LossConfig{});

    drn::NoGradGuard guard;
    const drn::Tensor sr = drn::forward_primal(model.primal, pair.lr).back();
    const drn::Tensor bicubic = drn::bicubic_resize(pair.lr, hr.shape().h, hr.shape().w);
    drn::png_write(pair.lr, out / "lr.png");
    drn::png_write(bicubic, out / "bicubic.png");
    drn::png_write(sr, out / "drn.png");
    drn::png_write(pair.hr, out / "hr.png");

    drn::EvalProtocol protocol;
    protocol.shave = 2;
    std::printf("bicubic  %.2f dB\n", drn::psnr(bicubic, pair.hr, protocol));
    std::printf("drn      %.2f dB\n", drn::psnr(sr, pair.hr, protocol));
    return 0;
}
