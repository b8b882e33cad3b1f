#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "egomatch/features.hpp"
#include "egomatch/image_io.hpp"

using namespace egomatch;

namespace {

FlowField random_flow(std::mt19937_64& rng, int w, int h, float scale = 3.0f) {
    FlowField f(w, h);
    std::uniform_real_distribution<float> u(-scale, scale);
    for (double& v : f.uv) v = u(rng);
    return f;
}

Image random_image(std::mt19937_64& rng, int w, int h) {
    Image img(w, h);
    std::uniform_int_distribution<int> q(0, 255);
    for (float& v : img.values) v = static_cast<float>(q(rng)) / 255.0f;
    return img;
}

double image_sum_outside(const Image& img, const BBox& b) {
    double s = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const bool inside = x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
            if (!inside)
                for (int c = 0; c < 3; ++c) s += img.at(x, y, c);
        }
    return s;
}

}  // namespace

TEST_CASE("mask_person") {
    Image ones(4, 4, 1.0f);
    const BBox box{1, 1, 2, 2, 0};
    Image masked = mask_person(ones, box);
    int zeros = 0, kept = 0;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const bool inside = x >= 1 && x < 3 && y >= 1 && y < 3;
            for (int c = 0; c < 3; ++c) CHECK(masked.at(x, y, c) == (inside ? 0.0f : 1.0f));
            (inside ? zeros : kept)++;
        }
    CHECK(zeros == 4);
    CHECK(kept == 12);

    Image all = mask_person(ones, BBox{0, 0, 4, 4, 0});
    for (float v : all.values) CHECK(v == 0.0f);

    CHECK(mask_person(masked, box) == masked);
    CHECK_THROWS_AS(mask_person(ones, BBox{5, 5, 2, 2, 0}), DataError);
    CHECK_THROWS_AS(mask_person(ones, BBox{-3, 0, 3, 2, 0}), DataError);

    // partially outside boxes are clipped
    Image clipped = mask_person(ones, BBox{-1, -1, 2, 2, 0});
    CHECK(clipped.at(0, 0, 0) == 0.0f);
    CHECK(clipped.at(1, 0, 0) == 1.0f);
}

TEST_CASE("mask_person conserves pixels outside the box") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Image img = random_image(rng, 9, 7);
        std::uniform_int_distribution<int> px(-2, 8), ext(1, 6);
        BBox b{px(rng), px(rng), ext(rng), ext(rng), 1};
        if (!clip_box(b, img.width, img.height)) continue;
        CHECK(image_sum_outside(mask_person(img, b), b) == image_sum_outside(img, b));
    }
}

TEST_CASE("crop_flow") {
    FlowField uniform(20, 12, 3.0f, 4.0f);
    FlowField c = crop_flow(uniform, BBox{5, 2, 7, 9, 0}, 32, 32);
    CHECK(c.width == 32);
    CHECK(c.height == 32);
    for (std::size_t i = 0; i < c.uv.size(); i += 2) {
        CHECK(c.uv[i] == 3.0);
        CHECK(c.uv[i + 1] == 4.0);
    }

    std::mt19937_64 rng(2);
    FlowField f = random_flow(rng, 6, 5);
    CHECK(crop_flow(f, BBox{0, 0, 6, 5, 0}, 6, 5) == f);

    FlowField quad(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const float q = static_cast<float>((y / 2) * 2 + (x / 2) + 1);
            quad.u(x, y) = q;
            quad.v(x, y) = -q;
        }
    FlowField bottom_right = crop_flow(quad, BBox{2, 2, 2, 2, 0}, 5, 3);
    for (std::size_t i = 0; i < bottom_right.uv.size(); i += 2) {
        CHECK(bottom_right.uv[i] == 4.0f);
        CHECK(bottom_right.uv[i + 1] == -4.0f);
    }
    CHECK_THROWS_AS(crop_flow(quad, BBox{4, 0, 2, 2, 0}, 2, 2), DataError);
}

TEST_CASE("stack_flows") {
    std::vector<FlowField> zeros(5, FlowField(7, 3));
    Tensor t = stack_flows(zeros);
    CHECK(t.shape() == Shape{10, 3, 7});
    for (double v : t.data()) CHECK(v == 0.0);

    for (int k = 1; k <= 5; ++k) {
        std::vector<FlowField> fields(5, FlowField(7, 3));
        fields[k - 1] = FlowField(7, 3, static_cast<float>(k), 0.0f);
        Tensor s = stack_flows(fields);
        for (std::size_t c = 0; c < 10; ++c)
            for (std::size_t i = 0; i < 21; ++i) CHECK(s[c * 21 + i] == (c == std::size_t(2 * (k - 1)) ? k : 0.0));
    }

    std::vector<FlowField> four(4, FlowField(2, 2));
    CHECK_THROWS_AS(stack_flows(four), DataError);
    std::vector<FlowField> mixed(5, FlowField(2, 2));
    mixed[3] = FlowField(3, 2);
    CHECK_THROWS_AS(stack_flows(mixed), DataError);
}

TEST_CASE("stack_flows unstacks exactly") {
    std::mt19937_64 rng(8);
    std::vector<FlowField> fields;
    for (int k = 0; k < 5; ++k) fields.push_back(random_flow(rng, 6, 4));
    Tensor s = stack_flows(fields);
    for (int k = 0; k < 5; ++k) {
        FlowField back(6, 4);
        for (std::size_t i = 0; i < 24; ++i) {
            back.uv[2 * i] = s[(2 * k) * 24 + i];
            back.uv[2 * i + 1] = s[(2 * k + 1) * 24 + i];
        }
        CHECK(back == fields[k]);
    }
}

TEST_CASE("hoof") {
    SUBCASE("uniform +x flow is one-hot on the bin holding angle 0") {
        // bins of width 2pi/5 starting at -pi: angle 0 sits at 2.5 bin widths -> bin 2
        HoofVector h = hoof(FlowField(9, 9, 1.0f, 0.0f));
        for (int cell = 0; cell < 9; ++cell)
            for (int b = 0; b < 5; ++b) CHECK(h[cell * 5 + b] == (b == 2 ? 1.0 : 0.0));
    }
    SUBCASE("zero flow") {
        for (double v : hoof(FlowField(5, 4))) CHECK(v == 0.0);
    }
    SUBCASE("angle pi falls in the first bin") {
        HoofVector h = hoof(FlowField(3, 3, -1.0f, 0.0f));
        CHECK(h[0] == 1.0);
    }
    SUBCASE("remainder pixels join the last cells") {
        // 4x4 field: cells are 1 pixel wide except the last column/row
        FlowField f(4, 4);
        f.u(3, 3) = 0.0f;
        f.v(3, 3) = 2.0f;  // angle pi/2 -> bin 3
        HoofVector h = hoof(f);
        CHECK(h[8 * 5 + 3] == 1.0);
        double total = 0.0;
        for (double v : h) total += v;
        CHECK(total == 1.0);
    }
    SUBCASE("too small") { CHECK_THROWS_AS(hoof(FlowField(2, 5)), DataError); }
}

TEST_CASE("hoof scale invariance and block normalization") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        FlowField f = random_flow(rng, 11, 8);
        HoofVector base = hoof(f);
        for (int cell = 0; cell < 9; ++cell) {
            double s = 0.0;
            for (int b = 0; b < 5; ++b) s += base[cell * 5 + b];
            CHECK(std::abs(s - 1.0) <= 1e-9);
        }
        for (double c : {0.5, 2.0, 10.0}) {
            FlowField scaled = f;
            for (double& v : scaled.uv) v *= c;
            HoofVector h = hoof(scaled);
            for (int i = 0; i < kHoofSize; ++i) CHECK(std::abs(h[i] - base[i]) <= 1e-9);
        }
    }
}

TEST_CASE("hoof_window") {
    std::mt19937_64 rng(5);
    HoofVector h = hoof(random_flow(rng, 9, 9));
    std::vector<HoofVector> same(10, h);
    HoofVector m = hoof_window(same);
    for (int i = 0; i < kHoofSize; ++i) CHECK(m[i] == doctest::Approx(h[i]).epsilon(1e-15));

    std::vector<HoofVector> half{h, HoofVector{}};
    HoofVector hm = hoof_window(half);
    for (int i = 0; i < kHoofSize; ++i) CHECK(hm[i] == h[i] / 2.0);

    std::vector<HoofVector> seq;
    for (int k = 0; k < 6; ++k) seq.push_back(hoof(random_flow(rng, 9, 9)));
    HoofVector a = hoof_window(seq);
    std::reverse(seq.begin(), seq.end());
    std::swap(seq[1], seq[4]);
    HoofVector b = hoof_window(seq);
    for (int i = 0; i < kHoofSize; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));

    CHECK_THROWS_AS(hoof_window(std::vector<HoofVector>{}), DataError);
    CHECK_THROWS_AS(hoof_window(std::vector<HoofVector>(11)), DataError);
}

TEST_CASE("mean_flow_magnitude") {
    CHECK(mean_flow_magnitude(FlowField(6, 5, 3.0f, 4.0f)) == 5.0);
    CHECK(mean_flow_magnitude(FlowField(6, 5)) == 0.0);
    std::mt19937_64 rng(3);
    FlowField f = random_flow(rng, 8, 8);
    FlowField g = f;
    for (double& v : g.uv) v *= 2.0;
    CHECK(mean_flow_magnitude(g) == doctest::Approx(2.0 * mean_flow_magnitude(f)).epsilon(1e-12));
}

TEST_CASE("ppm and flo round trips are bit exact") {
    std::mt19937_64 rng(99);
    Image img = random_image(rng, 13, 9);
    auto ppm = encode_ppm(img);
    Image back = decode_ppm(ppm);
    CHECK(back == img);
    CHECK(encode_ppm(back) == ppm);

    FlowField f = random_flow(rng, 10, 7, 50.0f);
    auto flo = encode_flo(f);
    CHECK(flo.size() == 12 + 10 * 7 * 8);
    CHECK(decode_flo(flo) == f);
    CHECK(encode_flo(decode_flo(flo)) == flo);

    // header layout: magic 202021.25 as little-endian float32 is "PIEH"
    CHECK(flo[0] == 'P');
    CHECK(flo[1] == 'I');
    CHECK(flo[2] == 'E');
    CHECK(flo[3] == 'H');
    CHECK(flo[4] == 10);
    CHECK(flo[8] == 7);

    auto truncated = flo;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_flo(truncated), DataError);
    auto bad_magic = flo;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_flo(bad_magic), DataError);

    std::string commented = "P6\n# made by hand\n2 1\n255\n";
    std::vector<std::uint8_t> bytes(commented.begin(), commented.end());
    for (int i = 0; i < 6; ++i) bytes.push_back(static_cast<std::uint8_t>(40 * i));
    Image small = decode_ppm(bytes);
    CHECK(small.width == 2);
    CHECK(small.at(1, 0, 2) == 200.0f / 255.0f);
    bytes.pop_back();
    CHECK_THROWS_AS(decode_ppm(bytes), DataError);
}
