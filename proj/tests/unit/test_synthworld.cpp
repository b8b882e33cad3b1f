#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "egomatch/image_io.hpp"
#include "egomatch/synthworld.hpp"

using namespace egomatch;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("egomatch_test_" + name);
    fs::remove_all(p);
    return p;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

WorldConfig small_config(int frames = 40) {
    WorldConfig cfg;
    cfg.frames = frames;
    return cfg;
}

}  // namespace

TEST_CASE("simulate is deterministic and seed dependent") {
    WorldConfig cfg = small_config(200);
    const Trajectories a = simulate(cfg), b = simulate(cfg);
    cfg.seed = 8;
    const Trajectories c = simulate(cfg);
    bool differs = false;
    for (int f = 0; f < 200; ++f)
        for (int i = 0; i < cfg.agents; ++i) {
            CHECK(a[f][i].x == b[f][i].x);
            CHECK(a[f][i].y == b[f][i].y);
            CHECK(a[f][i].heading == b[f][i].heading);
            differs = differs || a[f][i].x != c[f][i].x;
        }
    CHECK(differs);
}

TEST_CASE("zero speed keeps positions fixed") {
    WorldConfig cfg = small_config(300);
    cfg.motion.speed_min = cfg.motion.speed_max = 0.0;
    const Trajectories t = simulate(cfg);
    for (int f = 1; f < cfg.frames; ++f)
        for (int i = 0; i < cfg.agents; ++i) {
            CHECK(t[f][i].x == t[0][i].x);
            CHECK(t[f][i].y == t[0][i].y);
        }
}

TEST_CASE("agents stay inside the arena") {
    WorldConfig cfg = small_config(10000);
    cfg.agents = 6;
    cfg.wearers = 1;
    cfg.motion.speed_max = 0.9;  // fast walkers hit walls often
    const Trajectories t = simulate(cfg);
    int phases[3] = {0, 0, 0};
    for (const auto& frame : t)
        for (const AgentState& s : frame) {
            CHECK(s.x >= 0.0);
            CHECK(s.x <= cfg.arena);
            CHECK(s.y >= 0.0);
            CHECK(s.y <= cfg.arena);
            CHECK(std::abs(s.heading) <= std::numbers::pi);
            phases[static_cast<int>(s.phase)]++;
        }
    // every phase kind shows up
    for (int p : phases) CHECK(p > 0);
}

TEST_CASE("exo flow inside a box is the projected displacement") {
    WorldConfig cfg = small_config(3);
    cfg.agents = 1;
    cfg.wearers = 0;
    const double v = 0.25;
    Trajectories t(3, std::vector<AgentState>(1));
    for (int f = 0; f < 3; ++f) t[f][0] = AgentState{3.0 + v * f, 4.0, 0.0, v, 0.0, Phase::walk};
    const Dataset d = render(cfg, t);
    const ExoProjection proj = ExoProjection::for_config(cfg);
    for (int f = 0; f < 3; ++f) {
        const auto box = d.box(f, "exo", 0);
        REQUIRE(box.has_value());
        const FlowField& flow = d.flows.at("exo")[f];
        for (int y = 0; y < flow.height; ++y)
            for (int x = 0; x < flow.width; ++x) {
                const bool inside = x >= box->x && x < box->x + box->w && y >= box->y && y < box->y + box->h;
                const double want_u = inside && f > 0 ? proj.scale * v : 0.0;
                CHECK(flow.u(x, y) == doctest::Approx(want_u).epsilon(1e-12));
                CHECK(flow.v(x, y) == 0.0);
            }
    }
}

TEST_CASE("a still world has no flow") {
    WorldConfig cfg = small_config(4);
    const Trajectories moving = simulate(cfg);
    Trajectories still(4, moving[0]);
    const Dataset d = render(cfg, still);
    for (const auto& [cam, flows] : d.flows)
        for (const FlowField& f : flows)
            for (double x : f.uv) CHECK(x == 0.0);
}

TEST_CASE("ego flow under pure rotation") {
    // wearer turns in place by delta; a static point seen at right-angle theta
    // was at theta - delta before the turn
    WorldConfig cfg = small_config(2);
    cfg.agents = 1;
    cfg.wearers = 1;
    const double delta = 0.07;
    Trajectories t(2, std::vector<AgentState>(1));
    t[0][0] = AgentState{5.0, 5.0, 0.3, 0.0, delta, Phase::turn};
    t[1][0] = AgentState{5.0, 5.0, 0.3 + delta, 0.0, delta, Phase::turn};
    const Dataset d = render(cfg, t);
    const FlowField& flow = d.flows.at("ego0")[1];
    const int S = cfg.ego_size;
    const double f = S / 2.0;
    for (int r = 0; r < S; ++r)
        for (int c = 0; c < S; ++c) {
            const double a = (c + 0.5 - S / 2.0) / f, b = (S / 2.0 - r - 0.5) / f;
            const double theta = std::atan(a);
            const double c_prev = S / 2.0 - 0.5 + f * std::tan(theta - delta);
            // elevation over horizontal range is unchanged by yaw; depth shrinks by the cosine ratio
            const double r_prev = S / 2.0 - 0.5 - f * b * std::cos(theta) / std::cos(theta - delta);
            if (c_prev < -0.5 || c_prev > S - 0.5 || r_prev < -0.5 || r_prev > S - 0.5) {
                // the point was out of view last frame
                CHECK(flow.u(c, r) == 0.0);
                CHECK(flow.v(c, r) == 0.0);
                continue;
            }
            CHECK(flow.u(c, r) == doctest::Approx(c - c_prev).epsilon(1e-9));
            CHECK(flow.v(c, r) == doctest::Approx(r - r_prev).epsilon(1e-9));
        }
}

TEST_CASE("a wearer never sees its own color") {
    const WorldConfig cfg = small_config(300);
    const Dataset d = generate(cfg);
    int other_seen = 0;
    for (const CameraInfo* cam : d.ego_cameras()) {
        const auto own = cfg.palette[cam->wearer];
        for (const Image& img : d.images.at(cam->id))
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    const std::array<float, 3> px{img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)};
                    CHECK(px != own);
                    for (int j = 0; j < cfg.agents; ++j) other_seen += j != cam->wearer && px == cfg.palette[j];
                }
    }
    CHECK(other_seen > 0);
}

TEST_CASE("boxes follow the projected trajectory") {
    const WorldConfig cfg = small_config(200);
    const Trajectories t = simulate(cfg);
    const Dataset d = render(cfg, t);
    const ExoProjection proj = ExoProjection::for_config(cfg);
    for (int f = 0; f < cfg.frames; ++f) {
        const auto boxes = d.boxes(f, "exo");
        REQUIRE(boxes.size() == static_cast<std::size_t>(cfg.agents));
        for (const Annotation& a : boxes) {
            const auto [u, v] = proj.project(t[f][a.person].x, t[f][a.person].y);
            CHECK(a.x + proj.box_w / 2 == std::lround(u));
            CHECK(a.y + proj.box_h == std::lround(v));
        }
        // the visible flag reflects how much of the box its owner covers
        for (const Annotation& a : boxes) {
            const Image& img = d.images.at("exo")[f];
            int own = 0;
            for (int y = a.y; y < a.y + a.h; ++y)
                for (int x = a.x; x < a.x + a.w; ++x) {
                    const std::array<float, 3> px{img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)};
                    own += px == cfg.palette[a.person] || px == std::array<float, 3>{0, 0, 0};
                }
            // tick pixels are black and may belong to a nearer person, so this is a bound
            if (!a.visible) CHECK(own <= static_cast<int>(std::ceil(0.3 * a.w * a.h)) + 2);
        }
    }
}

TEST_CASE("ego flow magnitude tracks the wearer's own box") {
    const WorldConfig cfg;  // default world
    const Dataset d = generate(cfg);
    for (const CameraInfo* cam : d.ego_cameras()) {
        std::vector<double> ego;
        std::vector<std::vector<double>> exo(cfg.agents);
        for (int f = 1; f < d.frames; ++f) {
            ego.push_back(mean_flow_magnitude(d.flows.at(cam->id)[f]));
            for (int j = 0; j < cfg.agents; ++j) {
                const auto box = d.box(f, "exo", j);
                REQUIRE(box.has_value());
                exo[j].push_back(mean_flow_magnitude(crop_flow(d.flows.at("exo")[f], box->box(), box->w, box->h)));
            }
        }
        const double own = pearson(ego, exo[cam->wearer]);
        CHECK(own > 0.3);
        for (int j = 0; j < cfg.agents; ++j)
            if (j != cam->wearer) CHECK(own > pearson(ego, exo[j]));
    }
}

TEST_CASE("export and load round trip") {
    WorldConfig cfg = small_config(12);
    const Dataset d = generate(cfg);
    const fs::path dir = scratch_dir("export");
    export_dataset(d, dir);
    const Dataset back = load_dataset(dir);

    CHECK(back.cameras == d.cameras);
    CHECK(back.persons == d.persons);
    CHECK(back.frames == d.frames);
    CHECK(back.fps == d.fps);
    CHECK(back.train == d.train);
    CHECK(back.test == d.test);
    CHECK(back.annotations == d.annotations);
    CHECK(back.odometry == d.odometry);
    CHECK(back.generator == d.generator);
    for (const auto& [cam, flows] : d.flows)
        for (int f = 0; f < d.frames; ++f)
            for (std::size_t i = 0; i < flows[f].uv.size(); ++i)
                CHECK(back.flows.at(cam)[f].uv[i] == static_cast<double>(static_cast<float>(flows[f].uv[i])));

    for (const CameraInfo& c : d.cameras) {
        int ppm = 0, flo = 0;
        for (const auto& e : fs::directory_iterator(dir / "frames" / c.id)) ppm += e.path().extension() == ".ppm";
        for (const auto& e : fs::directory_iterator(dir / "flow" / c.id)) flo += e.path().extension() == ".flo";
        CHECK(ppm == back.frames);
        CHECK(flo == back.frames);
    }

    // exporting again gives the same bytes
    const fs::path dir2 = scratch_dir("export2");
    export_dataset(generate(cfg), dir2);
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const fs::path other = dir2 / fs::relative(e.path(), dir);
        CHECK(read_file_bytes(e.path()) == read_file_bytes(other));
    }

    // a damaged file is named in the error
    auto bytes = read_file_bytes(dir / "flow" / "exo" / "00003.flo");
    bytes.resize(bytes.size() - 3);
    write_file_bytes(dir / "flow" / "exo" / "00003.flo", bytes);
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("00003.flo"), DataError);
    write_file_bytes(dir / "annotations.csv", {'x', '\n'});
    CHECK_THROWS_AS(load_dataset(dir2 / "missing"), DataError);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("odometry quaternions are unit length") {
    const Dataset d = generate(small_config(50));
    for (const auto& [cam, rows] : d.odometry)
        for (const OdometryVector& r : rows)
            CHECK(std::abs(r[3] * r[3] + r[4] * r[4] + r[5] * r[5] + r[6] * r[6] - 1.0) <= 1e-6);
}

TEST_CASE("config validation") {
    WorldConfig cfg;
    cfg.wearers = 4;
    CHECK_THROWS_AS(simulate(cfg), std::invalid_argument);
    cfg = WorldConfig{};
    cfg.palette[1] = cfg.palette[0];
    CHECK_THROWS_AS(simulate(cfg), std::invalid_argument);
    cfg = WorldConfig{};
    cfg.frames = 0;
    CHECK_THROWS_AS(simulate(cfg), std::invalid_argument);
}
