#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>

#include "leap/error.hpp"
#include "leap/label2d.hpp"
#include "oracles.hpp"

using namespace leap;
using doctest::Approx;

namespace {

PromptMap one_prompt_each(std::size_t c) {
    std::vector<PromptEntry> p;
    for (std::size_t i = 0; i < c; ++i) p.push_back({"class" + std::to_string(i), i});
    return PromptMap(p, c);
}

RegionProposal region_with(std::vector<double> logits) {
    RegionProposal r;
    r.x_max = 1;
    r.y_max = 1;
    r.logits = std::move(logits);
    return r;
}

Bitmap random_mask(oracle::Rng& rng, int w, int h, double density) {
    Bitmap m(w, h);
    std::bernoulli_distribution on(density);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
            if (on(rng)) m.set(u, v);
    return m;
}

}  // namespace

TEST_CASE("filter_regions keeps regions at or above the threshold") {
    // logit(0.3) has similarity 0.3, above the 0.25 default.
    const double l03 = std::log(0.3 / 0.7);
    const auto kept = filter_regions({region_with({l03, -5.0})}, 0.25);
    CHECK(kept.size() == 1);
    CHECK(filter_regions({}, 0.25).empty());
    CHECK(filter_regions({region_with({-10.0, -10.0})}, 0.2).empty());
    CHECK(sigmoid(-10.0) == Approx(4.5397868702434395e-05).epsilon(1e-12));
    CHECK_THROWS_AS(filter_regions({}, 0.0), ParameterError);
    CHECK_THROWS_AS(filter_regions({}, 1.0), ParameterError);
}

TEST_CASE("filter_regions is idempotent and order preserving") {
    oracle::Rng rng(3);
    std::normal_distribution<double> n(0.0, 2.0);
    std::vector<RegionProposal> regions;
    for (int i = 0; i < 200; ++i) regions.push_back(region_with({n(rng), n(rng), n(rng)}));
    const auto once = filter_regions(regions, 0.4);
    const auto twice = filter_regions(once, 0.4);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(once[i].logits == twice[i].logits);
    std::size_t j = 0;
    for (const auto& r : regions)
        if (j < once.size() && r.logits == once[j].logits) ++j;
    CHECK(j == once.size());
}

TEST_CASE("region_class_probs softmaxes the best logit per class") {
    const auto pm2 = one_prompt_each(2);
    auto [d0, c0] = region_class_probs(region_with({0.0, 0.0}), pm2);
    CHECK(d0[0] == Approx(0.5));
    CHECK(c0 == Approx(0.5));
    auto [d1, c1] = region_class_probs(region_with({std::log(3.0), 0.0}), pm2);
    CHECK(d1[0] == Approx(0.75).epsilon(1e-14));
    CHECK(d1[1] == Approx(0.25).epsilon(1e-14));

    const PromptMap car({{"car", 0}, {"automobile", 0}}, 1);
    auto [d2, c2] = region_class_probs(region_with({1.0, 2.0}), car);
    CHECK(d2[0] == 1.0);
    CHECK(c2 == Approx(0.8807970779778823).epsilon(1e-14));

    CHECK_THROWS_AS(region_class_probs(region_with({1.0}), pm2), DimensionError);
}

TEST_CASE("a weaker synonym prompt never changes the class distribution") {
    oracle::Rng rng(17);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t c = 2 + trial % 4;
        std::vector<double> logits(c);
        for (double& l : logits) l = n(rng);
        const auto base = region_class_probs(region_with(logits), one_prompt_each(c));

        std::vector<PromptEntry> prompts;
        for (std::size_t i = 0; i < c; ++i) prompts.push_back({"p" + std::to_string(i), i});
        const std::size_t target = static_cast<std::size_t>(trial) % c;
        prompts.push_back({"synonym", target});
        auto extended = logits;
        extended.push_back(logits[target] - 0.5 - std::abs(n(rng)));
        const auto with = region_class_probs(region_with(extended), PromptMap(prompts, c));
        for (std::size_t i = 0; i < c; ++i) CHECK(with.first[i] == base.first[i]);
        CHECK(with.second == base.second);
    }
}

TEST_CASE("rasterize blends overlapping masks by confidence") {
    Bitmap a(4, 1);
    Bitmap b(4, 1);
    a.set(0, 0);
    a.set(1, 0);
    b.set(1, 0);
    b.set(2, 0);
    const auto one = ClassDistribution::one_hot(2, 0);
    const auto two = ClassDistribution::one_hot(2, 1);

    const auto single = rasterize({{a, normalize({0.9, 0.1}), 0.7}}, 4, 1);
    CHECK(single.covered_count() == 2);
    CHECK(single.at(1, 0)[0] == Approx(0.9));

    const auto equal = rasterize({{a, one, 0.5}, {b, two, 0.5}}, 4, 1);
    CHECK(equal.at(1, 0)[0] == Approx(0.5));
    CHECK(equal.at(0, 0) == one);
    CHECK(equal.at(2, 0) == two);
    CHECK_FALSE(equal.covered(3, 0));

    const auto weighted = rasterize({{a, one, 0.8}, {b, two, 0.4}}, 4, 1);
    CHECK(weighted.at(1, 0)[0] == Approx(0.6666666666666667).epsilon(1e-14));
    CHECK(weighted.at(1, 0)[1] == Approx(0.33333333333333337).epsilon(1e-14));

    CHECK_THROWS_AS(rasterize({{Bitmap(3, 1), one, 0.5}}, 4, 1), DimensionError);
    CHECK_THROWS_AS(rasterize({{a, one, 0.5}, {b, ClassDistribution::one_hot(3, 0), 0.5}}, 4, 1), DimensionError);
}

TEST_CASE("rasterized pixels are convex combinations of the covering masks") {
    oracle::Rng rng(23);
    std::uniform_real_distribution<double> conf(0.05, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const int w = 17;
        const int h = 11;
        const std::size_t c = 3 + trial % 3;
        std::vector<MaskedRegion> masks;
        for (int m = 0; m < 5; ++m)
            masks.push_back({random_mask(rng, w, h, 0.4),
                             ClassDistribution::from_normalized(oracle::random_distribution(rng, c), 1e-9), conf(rng)});
        const auto map = rasterize(masks, w, h);
        const auto reference = serial::rasterize(masks, w, h);
        CHECK(map == reference);
        for (int v = 0; v < h; ++v)
            for (int u = 0; u < w; ++u) {
                bool any = false;
                std::vector<double> lo(c, 1.0);
                std::vector<double> hi(c, 0.0);
                for (const auto& m : masks) {
                    if (!m.mask.test(u, v)) continue;
                    any = true;
                    for (std::size_t i = 0; i < c; ++i) {
                        lo[i] = std::min(lo[i], m.dist[i]);
                        hi[i] = std::max(hi[i], m.dist[i]);
                    }
                }
                REQUIRE(map.covered(u, v) == any);
                if (!any) continue;
                const auto p = map.at(u, v);
                double sum = 0.0;
                for (std::size_t i = 0; i < c; ++i) {
                    CHECK(p[i] >= lo[i] - 1e-12);
                    CHECK(p[i] <= hi[i] + 1e-12);
                    sum += p[i];
                }
                CHECK(std::abs(sum - 1.0) <= 1e-9);
            }
    }
}

TEST_CASE("run-length masks round-trip") {
    oracle::Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_mask(rng, 1 + trial % 13, 1 + trial % 7, 0.3);
        CHECK(decode_rle(encode_rle(m), m.width(), m.height()) == m);
    }
    Bitmap full(3, 2);
    for (auto& b : full.data()) b = 1;
    CHECK(encode_rle(full) == "0 6");
    CHECK(encode_rle(Bitmap(3, 2)) == "6");
    CHECK(decode_rle("2 1 3", 3, 2).test(2, 0));
    CHECK_THROWS_AS(decode_rle("2 1", 3, 2), FormatError);
    CHECK_THROWS_AS(decode_rle("5 5", 3, 2), FormatError);
    CHECK_THROWS_AS(decode_rle("1 x", 3, 2), FormatError);
}

TEST_CASE("box regions without masks fill pixels inside the half-open box") {
    RegionProposal r;
    r.x_min = 1;
    r.y_min = 0;
    r.x_max = 3;
    r.y_max = 2;
    r.logits = {1.0};
    const auto m = region_mask(r, 4, 3);
    CHECK(m.count() == 4);
    CHECK(m.test(1, 0));
    CHECK(m.test(2, 1));
    CHECK_FALSE(m.test(3, 0));
    CHECK_FALSE(m.test(1, 2));
}

TEST_CASE("assembling a region file drops weak regions") {
    const PromptMap pm({{"road", 0}, {"car", 1}, {"automobile", 1}}, 2);
    RegionFile file;
    file.width = 6;
    file.height = 4;
    RegionProposal strong;
    strong.x_min = 0;
    strong.y_min = 0;
    strong.x_max = 3;
    strong.y_max = 4;
    strong.logits = {-3.0, 1.0, 2.0};
    RegionProposal weak = strong;
    weak.x_min = 3;
    weak.x_max = 6;
    weak.logits = {-3.0, -4.0, -2.0};
    file.regions = {strong, weak};
    const auto result = assemble_pixel_labels(file, pm, 0.25);
    REQUIRE(result.masks.size() == 1);
    CHECK(result.map.covered_count() == 12);
    CHECK(result.masks[0].confidence == Approx(sigmoid(2.0)));
    CHECK(result.map.at(0, 0)[1] == Approx(1.0 / (1.0 + std::exp(-5.0))));

    const auto dir = std::filesystem::temp_directory_path() / "leap_test_label2d";
    std::filesystem::remove_all(dir);
    file.regions[0].mask = random_mask(*std::make_unique<oracle::Rng>(1), 6, 4, 0.5);
    write_region_file(dir / "r.json", file);
    const auto back = read_region_file(dir / "r.json");
    CHECK(back.width == 6);
    REQUIRE(back.regions.size() == 2);
    CHECK(back.regions[0].mask == file.regions[0].mask);
    CHECK_FALSE(back.regions[1].mask.has_value());
    CHECK(back.regions[1].logits == file.regions[1].logits);
    std::filesystem::remove_all(dir);
}

TEST_CASE("malformed region files are rejected") {
    const auto dir = std::filesystem::temp_directory_path() / "leap_test_regions_bad";
    std::filesystem::create_directories(dir);
    auto write = [&](const char* text) {
        std::ofstream(dir / "r.json") << text;
        return dir / "r.json";
    };
    CHECK_THROWS_AS(read_region_file(write(R"({"width": 4, "height": 4, "regions": [{"bbox": [0, 0, 5, 2], "logits": [1]}]})")), FormatError);
    CHECK_THROWS_AS(read_region_file(write(R"({"width": 4, "height": 4, "regions": [{"bbox": [2, 0, 2, 2], "logits": [1]}]})")), FormatError);
    CHECK_THROWS_AS(read_region_file(write(R"({"width": 4, "height": 4, "regions": [{"bbox": [0, 0, 2], "logits": [1]}]})")), FormatError);
    CHECK_THROWS_AS(read_region_file(write(R"({"width": 4, "regions": []})")), FormatError);
    CHECK_THROWS_AS(read_region_file(write("not json")), FormatError);
    CHECK_THROWS_AS(read_region_file(dir / "missing.json"), FormatError);
    std::filesystem::remove_all(dir);
}
