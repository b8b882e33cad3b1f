#include <random>

#include <json.hpp>

#include "doctest.h"
#include "egomatch/checkpoint.hpp"
#include "egomatch/features.hpp"
#include "egomatch/networks.hpp"

using namespace egomatch;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : t.data()) v = u(rng);
    return t;
}

NetInput image_input(std::mt19937_64& rng) { return {random_tensor(rng, {3, 64, 64}), std::nullopt}; }

// Hand count for one conv / linear layer.
std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }
std::size_t linear_params(std::size_t in, std::size_t out) { return out * in + out; }

bool same_values(const ParameterStore& a, const ParameterStore& b) {
    auto ea = a.entries(), eb = b.entries();
    if (ea.size() != eb.size()) return false;
    for (std::size_t i = 0; i < ea.size(); ++i) {
        if (ea[i].group != eb[i].group || ea[i].param->name != eb[i].param->name) return false;
        if (!(ea[i].param->value == eb[i].param->value)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("parameter counts follow the sharing policy") {
    const std::size_t early = conv_params(3, 8, 3) + conv_params(8, 16, 3) + conv_params(16, 16, 3) + conv_params(16, 32, 3);
    // three 2x2 pools take 64 -> 8, so the first linear layer sees 32*8*8
    const std::size_t late = 2 * conv_params(32, 32, 3) + linear_params(32 * 8 * 8, 128) + linear_params(128, 128);

    const ParameterCounts c = count_parameters(default_spec(Architecture::spatial, SharingPolicy::semi));
    CHECK(c.early == early);
    CHECK(c.late == late);

    EmbeddingNet semi = EmbeddingNet::build(default_spec(Architecture::spatial, SharingPolicy::semi), 1);
    EmbeddingNet full = EmbeddingNet::build(default_spec(Architecture::spatial, SharingPolicy::full), 1);
    EmbeddingNet none = EmbeddingNet::build(default_spec(Architecture::spatial, SharingPolicy::none), 1);
    CHECK(semi.params().count() == 2 * early + late);
    CHECK(full.params().count() == early + late);
    CHECK(none.params().count() == 2 * (early + late));

    CHECK(semi.params().count(Group::ego) == early);
    CHECK(semi.params().count(Group::exo) == early);
    CHECK(semi.params().count(Group::shared) == late);
    CHECK(full.params().count(Group::ego) == 0);
    CHECK(none.params().count(Group::shared) == 0);
    CHECK(semi.params().count() ==
          semi.params().count(Group::ego) + semi.params().count(Group::exo) + semi.params().count(Group::shared));

    // temporal stream: 32 -> 4 after pooling
    const ParameterCounts t = count_parameters(default_spec(Architecture::temporal, SharingPolicy::semi));
    CHECK(t.early == conv_params(10, 8, 3) + conv_params(8, 16, 3) + conv_params(16, 16, 3) + conv_params(16, 32, 3));
    CHECK(t.late == 2 * conv_params(32, 32, 3) + linear_params(32 * 4 * 4, 128) + linear_params(128, 128));

    const ParameterCounts two = count_parameters(default_spec(Architecture::two_stream, SharingPolicy::semi));
    CHECK(two.early == c.early + t.early);
    CHECK(two.late == c.late + t.late + linear_params(256, 128) + linear_params(128, 128));
}

TEST_CASE("shared layers are one storage") {
    EmbeddingNet semi = EmbeddingNet::build(default_spec(Architecture::spatial, SharingPolicy::semi), 3);
    CHECK(&semi.resolve(Branch::ego, "late", "spatial.late.0.weight") ==
          &semi.resolve(Branch::exo, "late", "spatial.late.0.weight"));
    CHECK(&semi.resolve(Branch::ego, "early", "spatial.early.0.weight") !=
          &semi.resolve(Branch::exo, "early", "spatial.early.0.weight"));
    EmbeddingNet full = EmbeddingNet::build(default_spec(Architecture::spatial, SharingPolicy::full), 3);
    CHECK(&full.resolve(Branch::ego, "early", "spatial.early.3.bias") ==
          &full.resolve(Branch::exo, "early", "spatial.early.3.bias"));
}

TEST_CASE("initialisation is seeded and bounded") {
    const NetworkSpec spec = default_spec(Architecture::two_stream, SharingPolicy::semi);
    EmbeddingNet a = EmbeddingNet::build(spec, 42);
    EmbeddingNet b = EmbeddingNet::build(spec, 42);
    EmbeddingNet c = EmbeddingNet::build(spec, 43);
    CHECK(same_values(a.params(), b.params()));
    CHECK_FALSE(same_values(a.params(), c.params()));

    for (const auto& e : a.params().entries()) {
        const Parameter& w = *e.param;
        std::size_t fan_in = 0;
        if (w.name.ends_with(".weight")) {
            fan_in = w.value.size() / w.value.shape()[0];
        } else {
            const std::string wn = w.name.substr(0, w.name.size() - 5) + ".weight";
            const Parameter* weight = a.params().find(e.group, wn);
            REQUIRE(weight != nullptr);
            fan_in = weight->value.size() / weight->value.shape()[0];
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double v : w.value.data()) CHECK(std::abs(v) <= bound);
    }
}

TEST_CASE("embedding shapes and input validation") {
    std::mt19937_64 rng(1);
    EmbeddingNet net = EmbeddingNet::build(default_spec(Architecture::spatial, SharingPolicy::semi), 1);
    Tensor e = net.embed_ego(image_input(rng));
    CHECK(e.shape() == Shape{128});
    CHECK(e.all_finite());

    CHECK_THROWS_AS(net.embed_ego(NetInput{random_tensor(rng, {3, 32, 32}), std::nullopt}), ShapeError);
    CHECK_THROWS_AS(net.embed_exo(NetInput{std::nullopt, random_tensor(rng, {10, 32, 32})}), ShapeError);

    EmbeddingNet small = EmbeddingNet::build(default_spec(Architecture::spatial, SharingPolicy::semi, 16), 1);
    CHECK(small.embed_exo(image_input(rng)).shape() == Shape{16});

    EmbeddingNet two = EmbeddingNet::build(default_spec(Architecture::two_stream, SharingPolicy::semi), 1);
    NetInput both{random_tensor(rng, {3, 64, 64}), random_tensor(rng, {10, 32, 32})};
    CHECK(two.embed_ego(both).shape() == Shape{128});
    CHECK(two.embed_ego(both) == two.embed_ego(both));
    CHECK_THROWS_AS(two.embed_ego(NetInput{both.image, std::nullopt}), ShapeError);
    CHECK_THROWS_AS(two.embed_ego(NetInput{std::nullopt, both.flow}), ShapeError);
}

TEST_CASE("branch outputs under each policy") {
    std::mt19937_64 rng(4);
    const NetInput x = image_input(rng);

    EmbeddingNet full = EmbeddingNet::build(default_spec(Architecture::spatial, SharingPolicy::full), 9);
    CHECK(full.embed_ego(x) == full.embed_exo(x));

    // branch copies start from the same values
    EmbeddingNet none = EmbeddingNet::build(default_spec(Architecture::spatial, SharingPolicy::none), 9);
    CHECK(none.embed_ego(x) == none.embed_exo(x));

    EmbeddingNet semi = EmbeddingNet::build(default_spec(Architecture::spatial, SharingPolicy::semi), 9);
    CHECK(semi.embed_ego(x) == semi.embed_exo(x));
    // perturb theta_1 only
    std::normal_distribution<double> n(0.0, 0.05);
    for (const auto& e : semi.params().entries())
        if (e.group == Group::ego)
            for (double& v : e.param->value.data()) v += n(rng);
    for (int trial = 0; trial < 5; ++trial) {
        const NetInput y = image_input(rng);
        CHECK_FALSE(semi.embed_ego(y) == semi.embed_exo(y));
    }

    // both exo paths of a triplet are the same function
    Graph g;
    Var p = semi.forward(g, Branch::exo, x);
    Var q = semi.forward(g, Branch::exo, x);
    CHECK(p.value() == q.value());
}

TEST_CASE("two-stream output ignores a stream cut off by zero fusion weights") {
    std::mt19937_64 rng(12);
    EmbeddingNet net = EmbeddingNet::build(default_spec(Architecture::two_stream, SharingPolicy::semi), 5);
    Parameter& w = net.resolve(Branch::ego, "fusion", "fusion.0.weight");
    REQUIRE(w.value.shape() == Shape{128, 256});
    for (std::size_t r = 0; r < 128; ++r)
        for (std::size_t c = 128; c < 256; ++c) w.value[r * 256 + c] = 0.0;

    const Tensor image = random_tensor(rng, {3, 64, 64});
    const Tensor base = net.embed_ego(NetInput{image, Tensor(Shape{10, 32, 32})});
    for (int trial = 0; trial < 3; ++trial) {
        CHECK(net.embed_ego(NetInput{image, random_tensor(rng, {10, 32, 32})}) == base);
    }
    CHECK_FALSE(net.embed_ego(NetInput{random_tensor(rng, {3, 64, 64}), Tensor(Shape{10, 32, 32})}) == base);
}

TEST_CASE("inconsistent specs name the offending layer") {
    NetworkSpec spec = default_spec(Architecture::spatial, SharingPolicy::semi);
    spec.streams[0].early[10] = LayerSpec::pool(16, 16);  // only 16x16 left here, window ok
    CHECK_NOTHROW(validate_spec(spec));
    spec.streams[0].early[10] = LayerSpec::pool(17, 1);
    try {
        validate_spec(spec);
        FAIL("expected SpecError");
    } catch (const SpecError& e) {
        CHECK(std::string(e.what()).find("early layer 10") != std::string::npos);
    }
    CHECK_THROWS_AS(EmbeddingNet::build(spec, 1), SpecError);

    NetworkSpec wrong_d = default_spec(Architecture::spatial, SharingPolicy::semi);
    wrong_d.streams[0].late.back() = LayerSpec::linear(64);
    CHECK_THROWS_WITH_AS(validate_spec(wrong_d), doctest::Contains("late layer 6"), SpecError);

    NetworkSpec conv_after_linear = default_spec(Architecture::spatial, SharingPolicy::semi);
    conv_after_linear.streams[0].late.insert(conv_after_linear.streams[0].late.begin() + 5, LayerSpec::conv(4, 1));
    CHECK_THROWS_WITH_AS(validate_spec(conv_after_linear), doctest::Contains("late layer 5"), SpecError);

    NetworkSpec no_fusion = default_spec(Architecture::two_stream, SharingPolicy::semi);
    no_fusion.fusion.clear();
    CHECK_THROWS_AS(validate_spec(no_fusion), SpecError);
}

TEST_CASE("match") {
    MatchQuery q{Tensor::vector({0, 0}), {{0, Tensor::vector({1, 0})}, {1, Tensor::vector({0, 2})}}};
    CHECK(match(q) == 0);

    MatchQuery single{Tensor::vector({5, 5}), {{7, Tensor::vector({-3, 1})}}};
    CHECK(match(single) == 7);

    MatchQuery tie{Tensor::vector({0, 0}), {{4, Tensor::vector({0, 1})}, {2, Tensor::vector({1, 0})}}};
    CHECK(match(tie) == 2);

    CHECK_THROWS(match(MatchQuery{Tensor::vector({0}), {}}));

    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        MatchQuery r{random_tensor(rng, {6}), {}};
        for (int id = 0; id < 4; ++id) r.candidates[id] = random_tensor(rng, {6});
        const int best = match(r);
        // brute force
        int oracle = -1;
        double best_d = 1e300;
        for (const auto& [id, c] : r.candidates) {
            double d = 0.0;
            for (std::size_t i = 0; i < 6; ++i) d += (r.ego[i] - c[i]) * (r.ego[i] - c[i]);
            if (d < best_d) best_d = d, oracle = id;
        }
        CHECK(best == oracle);

        // translating every embedding by the same vector keeps the answer
        const Tensor shift = random_tensor(rng, {6});
        MatchQuery moved = r;
        for (std::size_t i = 0; i < 6; ++i) moved.ego[i] += shift[i] * 10.0;
        for (auto& [id, c] : moved.candidates)
            for (std::size_t i = 0; i < 6; ++i) c[i] += shift[i] * 10.0;
        CHECK(match(moved) == best);
    }
}

TEST_CASE("match_score") {
    const Tensor a = Tensor::vector({1, 2, 3});
    const Tensor b = Tensor::vector({0, 2, 5});
    CHECK(match_score(a, a) == 0.0);
    CHECK(match_score(a, b) == -5.0);
    CHECK(match_score(a, b) == match_score(b, a));
    CHECK(match_score(a, Tensor::vector({1, 2, 4})) > match_score(a, b));
    CHECK_THROWS_AS(match_score(a, Tensor::vector({1, 2})), ShapeError);
}

TEST_CASE("spec json round trip") {
    for (auto arch : {Architecture::spatial, Architecture::temporal, Architecture::two_stream})
        for (auto share : {SharingPolicy::full, SharingPolicy::semi, SharingPolicy::none}) {
            const NetworkSpec s = default_spec(arch, share, 32);
            CHECK(spec_from_json(spec_to_json(s)) == s);
        }
    CHECK_THROWS_AS(spec_from_json("{"), SpecError);
    CHECK_THROWS_AS(spec_from_json("{\"architecture\":\"spatial\"}"), SpecError);
}

TEST_CASE("checkpoint round trip and rejection") {
    EmbeddingNet net = EmbeddingNet::build(default_spec(Architecture::two_stream, SharingPolicy::semi, 16), 77);
    const CheckpointMeta meta{{"loss", "triplet"}};
    const auto bytes = encode_checkpoint(net, meta);
    CHECK(bytes[0] == 'E');
    CHECK(bytes[3] == '1');

    Checkpoint back = decode_checkpoint(bytes);
    CHECK(back.net.spec() == net.spec());
    CHECK(back.meta == meta);
    CHECK(same_values(back.net.params(), net.params()));
    CHECK(encode_checkpoint(back.net, back.meta) == bytes);

    std::mt19937_64 rng(3);
    NetInput in{random_tensor(rng, {3, 64, 64}), random_tensor(rng, {10, 32, 32})};
    CHECK(back.net.embed_ego(in) == net.embed_ego(in));

    auto truncated = bytes;
    truncated.resize(bytes.size() - 8);
    CHECK_THROWS_AS(decode_checkpoint(truncated), DataError);
    auto padded = bytes;
    padded.push_back(0);
    CHECK_THROWS_AS(decode_checkpoint(padded), DataError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), DataError);

    // a header whose spec no longer matches the stored groups
    const std::uint32_t len = bytes[4] | bytes[5] << 8 | bytes[6] << 16 | std::uint32_t(bytes[7]) << 24;
    auto header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
    header["spec"]["sharing"] = "full";
    const std::string text = header.dump();
    std::vector<std::uint8_t> edited{'E', 'G', 'M', '1'};
    for (int k = 0; k < 4; ++k) edited.push_back(static_cast<std::uint8_t>(text.size() >> (8 * k)));
    edited.insert(edited.end(), text.begin(), text.end());
    edited.insert(edited.end(), bytes.begin() + 8 + len, bytes.end());
    CHECK_THROWS_AS(decode_checkpoint(edited), DataError);

    // shape edit with the payload length kept consistent
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
    auto& first = header["parameters"][0]["shape"];
    const std::size_t n = first[0].get<std::size_t>();
    first = nlohmann::json::array({n * first[1].get<std::size_t>(), first[2], first[3]});
    const std::string text2 = header.dump();
    std::vector<std::uint8_t> reshaped{'E', 'G', 'M', '1'};
    for (int k = 0; k < 4; ++k) reshaped.push_back(static_cast<std::uint8_t>(text2.size() >> (8 * k)));
    reshaped.insert(reshaped.end(), text2.begin(), text2.end());
    reshaped.insert(reshaped.end(), bytes.begin() + 8 + len, bytes.end());
    CHECK_THROWS_WITH_AS(decode_checkpoint(reshaped), doctest::Contains("shape"), DataError);
}
