#include <gtest/gtest.h>

#include <fstream>

#include "drn/evaluation.hpp"
#include "support/oracles.hpp"
#include "support/toy_images.hpp"

using drn::EvalProtocol;
using drn::Shape;
using drn::Tensor;

namespace {

EvalProtocol rgb(std::int64_t shave = 0) { return {EvalProtocol::Channel::RGB, shave}; }
EvalProtocol luma(std::int64_t shave = 0) { return {EvalProtocol::Channel::Y, shave}; }

Tensor perturb(const Tensor& x, double amount, std::uint64_t seed) {
    drn::Rng rng(seed, "test.perturb");
    Tensor y = x.detach();
    for (float& v : y.mutable_data()) v = std::clamp(v + static_cast<float>(rng.uniform(-amount, amount)), 0.0f, 1.0f);
    return y;
}

}  // namespace

TEST(Psnr, ConstantOffsetOfSixteenLevels) {
    const Tensor a(Shape{1, 3, 8, 8}, 0.0f);
    const Tensor b(Shape{1, 3, 8, 8}, 16.0f / 255.0f);
    EXPECT_NEAR(drn::psnr(a, b, rgb()), 10.0 * std::log10(255.0 * 255.0 / 256.0), 1e-9);
    EXPECT_NEAR(drn::psnr(a, b, rgb()), 24.05, 0.005);
    // luma of 16/255 gray is 16 + 219 * 16 / 255 = 29.74, rounded to 30
    EXPECT_NEAR(drn::psnr(a, b, luma()), 10.0 * std::log10(255.0 * 255.0 / 196.0), 1e-9);
}

TEST(Psnr, IdenticalImagesHitTheCap) {
    const Tensor a = toy::make_image(16, 16, 1);
    EXPECT_EQ(drn::psnr(a, a, luma(2)), 100.0);
    EXPECT_THROW((void)drn::psnr(a, toy::make_image(16, 17, 1), luma()), std::invalid_argument);
    EXPECT_THROW((void)drn::psnr(a, a, luma(8)), std::invalid_argument);
}

TEST(Luma, Bt601Endpoints) {
    const Tensor img(Shape{1, 3, 1, 3}, std::vector<float>{0, 1, 0.5f, 0, 1, 0.5f, 0, 1, 0.5f});
    const Tensor y = drn::rgb_to_y(img);
    EXPECT_NEAR(y[0], 16.0, 1e-4);
    EXPECT_NEAR(y[1], 235.0, 1e-4);
    EXPECT_NEAR(y[2], 125.5, 1e-4);
}

TEST(Scoring, MatchesOracle) {
    for (std::uint64_t k = 0; k < 6; ++k) {
        const Tensor hr = toy::make_image(30, 26, 10 + k);
        const Tensor sr = perturb(hr, 0.05 * double(k + 1), k);
        for (std::int64_t shave : {0, 2, 4}) {
            EXPECT_NEAR(drn::psnr(sr, hr, luma(shave)), oracle::psnr(sr, hr, true, shave), 1e-9);
            EXPECT_NEAR(drn::psnr(sr, hr, rgb(shave)), oracle::psnr(sr, hr, false, shave), 1e-9);
            EXPECT_NEAR(drn::ssim(sr, hr, luma(shave)), oracle::ssim(sr, hr, true, shave), 1e-9);
            EXPECT_NEAR(drn::ssim(sr, hr, rgb(shave)), oracle::ssim(sr, hr, false, shave), 1e-9);
        }
    }
}

TEST(Ssim, SelfSymmetryAndOrdering) {
    const Tensor a = toy::make_image(32, 32, 20);
    EXPECT_NEAR(drn::ssim(a, a, luma()), 1.0, 1e-12);
    const Tensor b = perturb(a, 0.1, 1);
    EXPECT_NEAR(drn::ssim(a, b, luma()), drn::ssim(b, a, luma()), 1e-12);
    double prev = 1.0;
    for (double amount : {0.02, 0.08, 0.2, 0.4}) {
        const double s = drn::ssim(a, perturb(a, amount, 2), rgb());
        EXPECT_LT(s, prev);
        prev = s;
    }
    EXPECT_THROW((void)drn::ssim(toy::make_image(10, 10, 1), toy::make_image(10, 10, 2), luma()),
                 std::invalid_argument);
}

TEST(Scoring, ShaveIgnoresTheBorder) {
    const Tensor a = toy::make_image(24, 24, 30);
    Tensor b = a.detach();
    auto d = b.mutable_data();
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t i = 0; i < 24; ++i) {
            d[(c * 24 + 0) * 24 + i] = 1.0f - d[(c * 24 + 0) * 24 + i];
            d[(c * 24 + i) * 24 + 23] = 1.0f - d[(c * 24 + i) * 24 + 23];
        }
    EXPECT_LT(drn::psnr(a, b, rgb(0)), 100.0);
    EXPECT_EQ(drn::psnr(a, b, rgb(1)), 100.0);
    // shaving 2 then 1 more equals shaving 3
    EXPECT_EQ(drn::psnr(a, b, rgb(3)), oracle::psnr(a, b, false, 3));
}

TEST(Scoring, LumaIgnoresChromaOnlyChanges) {
    // shift red and blue in opposite directions so the luma is unchanged
    Tensor a(Shape{1, 3, 12, 12}, 0.5f);
    Tensor b = a.detach();
    auto d = b.mutable_data();
    // +5 red levels and -13 blue levels move the luma by 0.011 levels
    const float dr = 5.0f / 255.0f, db = 13.0f / 255.0f;
    for (std::int64_t i = 0; i < 144; ++i) {
        d[i] += dr;
        d[288 + i] -= db;
    }
    EXPECT_EQ(drn::psnr(a, b, luma()), 100.0);
    EXPECT_LT(drn::psnr(a, b, rgb()), 100.0);
}

TEST(Dataset, ScoresMatchingNamesAndReportsGaps) {
    const auto root = toy::scratch_dir("eval");
    toy::write_set(root / "ref", 3, 24, 24, 40);
    toy::write_set(root / "same", 3, 24, 24, 40);
    auto report = drn::evaluate_dataset(root / "same", root / "ref", luma(2));
    ASSERT_EQ(report.rows.size(), 3u);
    EXPECT_EQ(report.mean_psnr, 100.0);
    EXPECT_NEAR(report.mean_ssim, 1.0, 1e-12);
    EXPECT_TRUE(report.errors.empty());

    std::filesystem::remove(root / "same" / "img_001.png");
    drn::png_write(toy::make_image(24, 24, 1), root / "same" / "extra.png");
    report = drn::evaluate_dataset(root / "same", root / "ref", luma(2));
    EXPECT_EQ(report.rows.size(), 2u);
    ASSERT_EQ(report.errors.size(), 2u);
    EXPECT_NE(report.errors[0].find("extra.png"), std::string::npos);
    EXPECT_NE(report.errors[1].find("img_001.png"), std::string::npos);

    std::filesystem::create_directories(root / "other");
    drn::png_write(toy::make_image(24, 24, 1), root / "other" / "nothing.png");
    EXPECT_THROW((void)drn::evaluate_dataset(root / "other", root / "ref", luma(2)), std::runtime_error);
}

TEST(Dataset, LargerReferenceIsCroppedTopLeft) {
    const auto root = toy::scratch_dir("eval_crop");
    const Tensor hr = toy::make_image(26, 27, 50);
    drn::png_write(hr, (std::filesystem::create_directories(root / "ref"), root / "ref" / "a.png"));
    std::filesystem::create_directories(root / "out");
    drn::png_write(drn::crop_to_multiple(hr, 4), root / "out" / "a.png");
    const auto report = drn::evaluate_dataset(root / "out", root / "ref", luma(4));
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_EQ(report.rows[0].psnr_db, 100.0);
}

TEST(Report, CsvAndTableLayout) {
    drn::EvalReport r;
    r.protocol = luma(4).describe();
    r.rows = {{"a.png", 30.0, 0.9}, {"b.png", 32.0, 0.8}};
    drn::finalize(r);
    EXPECT_EQ(drn::format_csv(r), "image,psnr_db,ssim\na.png,30.000000,0.900000\nb.png,32.000000,0.800000\n"
                                  "mean,31.000000,0.850000\n");
    const std::string table = drn::format_table(r);
    EXPECT_EQ(table.rfind("# protocol: channel=y shave=4", 0), 0u);
    EXPECT_NE(table.find("mean"), std::string::npos);
}
