#include "egomatch/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "egomatch/random.hpp"

namespace egomatch {

namespace {

using Color = std::array<float, 3>;
constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a <= -kPi) a += 2.0 * kPi;
    return a;
}

void start_phase(AgentState& s, int& timer, const MotionProfile& m, Rng& rng) {
    const double r = rng.unit() * (m.p_walk + m.p_pause + m.p_turn);
    timer = rng.range(m.phase_min, m.phase_max);
    if (r < m.p_walk) {
        s.phase = Phase::walk;
        s.speed = rng.uniform(m.speed_min, m.speed_max);
        s.turn = 0.0;
    } else if (r < m.p_walk + m.p_pause) {
        s.phase = Phase::pause;
        s.speed = 0.0;
        s.turn = 0.0;
    } else {
        s.phase = Phase::turn;
        s.speed = rng.uniform(m.speed_min, m.speed_max);
        const double mag = rng.uniform(0.3, 1.0) * m.turn_rate;
        s.turn = rng.unit() < 0.5 ? -mag : mag;
    }
}

void reflect(double& p, double& heading, double lo, double hi, bool x_axis) {
    if (p < lo) {
        p = 2.0 * lo - p;
        heading = x_axis ? kPi - heading : -heading;
    } else if (p > hi) {
        p = 2.0 * hi - p;
        heading = x_axis ? kPi - heading : -heading;
    }
    p = std::clamp(p, lo, hi);
}

// ---- exo rendering

const Color kOutside{0.25f, 0.25f, 0.25f};
const Color kFloorA{0.55f, 0.55f, 0.50f};
const Color kFloorB{0.62f, 0.62f, 0.58f};
const Color kBackWallA{0.45f, 0.40f, 0.50f};
const Color kBackWallB{0.50f, 0.45f, 0.55f};
const Color kTick{0.0f, 0.0f, 0.0f};

// ---- ego rendering
const Color kSky{0.75f, 0.85f, 0.95f};
const Color kEgoFloorA{0.35f, 0.35f, 0.35f};
const Color kEgoFloorB{0.45f, 0.45f, 0.45f};
const std::array<Color, 4> kWalls{{{0.60f, 0.50f, 0.40f},    // x = 0
                                   {0.40f, 0.55f, 0.60f},    // x = arena
                                   {0.55f, 0.55f, 0.35f},    // y = 0
                                   {0.50f, 0.40f, 0.55f}}};  // y = arena

Color brighter(const Color& c) { return {c[0] + 0.15f, c[1] + 0.15f, c[2] + 0.15f}; }

void put(Image& img, int x, int y, const Color& c) {
    for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
}

bool checker(double x, double y) {
    return (static_cast<long>(std::floor(x)) + static_cast<long>(std::floor(y))) % 2 == 0;
}

struct Pose {
    double x, y, phi;
};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    int agent = -1;  // -1 static scene
    bool sky = false;
    double h = 0.0;
    Color color{};
};

class EgoRenderer {
public:
    EgoRenderer(const WorldConfig& cfg) : a_(cfg.arena), s_(cfg.ego_size), f_(cfg.ego_size / 2.0) {}

    double focal() const { return f_; }

    // Surface seen through pixel (c, r) from pose p.
    Hit trace(const Pose& p, int c, int r, int self, const std::vector<AgentState>& agents, const Color* palette) const {
        const double a = (c + 0.5 - s_ / 2.0) / f_;
        const double b = (s_ / 2.0 - r - 0.5) / f_;
        const double fx = std::cos(p.phi), fy = std::sin(p.phi);
        const double rx = fy, ry = -fx;
        const double dx = fx + a * rx, dy = fy + a * ry;

        // first wall crossing
        double t_wall = std::numeric_limits<double>::infinity();
        int wall = 0;
        auto try_wall = [&](double t, int id) {
            if (t > 0.0 && t < t_wall) {
                t_wall = t;
                wall = id;
            }
        };
        if (dx < 0) try_wall(-p.x / dx, 0);
        if (dx > 0) try_wall((a_ - p.x) / dx, 1);
        if (dy < 0) try_wall(-p.y / dy, 2);
        if (dy > 0) try_wall((a_ - p.y) / dy, 3);

        Hit hit;
        const double h_wall = kEyeHeight + b * t_wall;
        if (h_wall < 0.0) {
            hit.t = kEyeHeight / -b;
            const double wx = p.x + hit.t * dx, wy = p.y + hit.t * dy;
            hit.color = checker(wx, wy) ? kEgoFloorA : kEgoFloorB;
            hit.h = 0.0;
        } else if (h_wall <= kWallHeight) {
            hit.t = t_wall;
            const double wx = p.x + t_wall * dx, wy = p.y + t_wall * dy;
            const double along = wall < 2 ? wy : wx;
            hit.color = static_cast<long>(std::floor(along)) % 2 ? brighter(kWalls[wall]) : kWalls[wall];
            hit.h = h_wall;
        } else {
            hit.sky = true;
            hit.color = kSky;
        }

        for (std::size_t j = 0; j < agents.size(); ++j) {
            if (static_cast<int>(j) == self) continue;
            const double ox = agents[j].x - p.x, oy = agents[j].y - p.y;
            const double tj = ox * fx + oy * fy;
            if (tj < 0.2 || tj >= hit.t) continue;
            const double lj = ox * rx + oy * ry;
            if (std::abs(a * tj - lj) > kAgentRadius) continue;
            const double h = kEyeHeight + b * tj;
            if (h < 0.0 || h > kAgentHeight) continue;
            hit.t = tj;
            hit.agent = static_cast<int>(j);
            hit.sky = false;
            hit.h = h;
            hit.color = palette[j];
        }
        return hit;
    }

    // Image-space displacement of what pixel (c, r) shows, relative to the previous frame.
    std::array<double, 2> flow(const Pose& now, const Pose& prev, int c, int r, const Hit& hit,
                               const std::vector<AgentState>& cur, const std::vector<AgentState>& before) const {
        const double a = (c + 0.5 - s_ / 2.0) / f_;
        const double b = (s_ / 2.0 - r - 0.5) / f_;
        const double fx = std::cos(now.phi), fy = std::sin(now.phi);
        const double dx = fx + a * fy, dy = fy - a * fx;
        const bool still = now.x == prev.x && now.y == prev.y && now.phi == prev.phi;
        if (still && (hit.agent < 0 || (cur[hit.agent].x == before[hit.agent].x && cur[hit.agent].y == before[hit.agent].y)))
            return {0.0, 0.0};
        const double pfx = std::cos(prev.phi), pfy = std::sin(prev.phi);
        const double prx = pfy, pry = -pfx;

        double depth, lat, up;
        if (hit.sky) {
            depth = dx * pfx + dy * pfy;
            lat = dx * prx + dy * pry;
            up = b;
        } else {
            double wx = now.x + hit.t * dx, wy = now.y + hit.t * dy;
            if (hit.agent >= 0) {
                wx -= cur[hit.agent].x - before[hit.agent].x;
                wy -= cur[hit.agent].y - before[hit.agent].y;
            }
            const double ox = wx - prev.x, oy = wy - prev.y;
            depth = ox * pfx + oy * pfy;
            lat = ox * prx + oy * pry;
            up = hit.h - kEyeHeight;
        }
        if (depth < 1e-3) return {0.0, 0.0};
        const double c_prev = s_ / 2.0 + f_ * lat / depth - 0.5;
        const double r_prev = s_ / 2.0 - f_ * up / depth - 0.5;
        // only points that were in view last frame have a displacement
        if (c_prev < -0.5 || c_prev > s_ - 0.5 || r_prev < -0.5 || r_prev > s_ - 0.5) return {0.0, 0.0};
        return {c - c_prev, r - r_prev};
    }

private:
    double a_;
    int s_;
    double f_;
};

int round_int(double v) { return static_cast<int>(std::lround(v)); }

}  // namespace

std::vector<std::array<float, 3>> WorldConfig::default_palette() {
    return {{0.90f, 0.10f, 0.10f}, {0.10f, 0.80f, 0.10f}, {0.10f, 0.20f, 0.90f}, {0.90f, 0.85f, 0.10f},
            {0.85f, 0.10f, 0.85f}, {0.10f, 0.85f, 0.85f}, {1.00f, 0.55f, 0.00f}, {0.55f, 0.00f, 1.00f}};
}

void WorldConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("world config: " + m); };
    if (!(arena > 2 * kArenaMargin + 1.0)) fail("arena too small");
    if (agents < 1) fail("need at least one agent");
    if (wearers < 0 || wearers > agents) fail("wearer count must be between 0 and the agent count");
    if (frames < 1) fail("frame count must be positive");
    if (exo_width < 16 || exo_height < 16 || ego_size < 8) fail("render sizes too small");
    if (!(fps > 0)) fail("fps must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train fraction must be in (0,1)");
    if (static_cast<int>(palette.size()) < agents) fail("palette has fewer colors than agents");
    for (int i = 0; i < agents; ++i)
        for (int j = 0; j < i; ++j)
            if (palette[i] == palette[j]) fail("agent colors must be distinct");
    const MotionProfile& m = motion;
    if (m.speed_min < 0 || m.speed_max < m.speed_min) fail("bad speed range");
    if (m.turn_rate < 0) fail("turn rate must be non-negative");
    if (m.p_walk < 0 || m.p_pause < 0 || m.p_turn < 0 || m.p_walk + m.p_pause + m.p_turn <= 0)
        fail("phase probabilities must be non-negative with a positive sum");
    if (m.phase_min < 1 || m.phase_max < m.phase_min) fail("bad phase duration range");
}

MotionProfile WorldConfig::profile(int agent) const {
    MotionProfile m = motion;
    if (!distinct_motion || agents < 2) return m;
    // agent 0 walks briskly and rarely stops, the last agent dawdles
    const double k = static_cast<double>(agent) / (agents - 1);
    const double span = motion.speed_max - motion.speed_min;
    m.speed_min = motion.speed_min + (1.0 - k) * 0.5 * span;
    m.speed_max = motion.speed_max - k * 0.5 * span;
    m.p_pause = 0.05 + 0.55 * k;
    m.p_walk = (1.0 - m.p_pause) * 0.6;
    m.p_turn = (1.0 - m.p_pause) * 0.4;
    return m;
}

std::string WorldConfig::to_json() const {
    nlohmann::json j = {{"arena", arena},
                        {"agents", agents},
                        {"wearers", wearers},
                        {"frames", frames},
                        {"seed", seed},
                        {"exo_size", {exo_width, exo_height}},
                        {"ego_size", ego_size},
                        {"fps", fps},
                        {"train_fraction", train_fraction},
                        {"distinct_motion", distinct_motion},
                        {"motion",
                         {{"speed", {motion.speed_min, motion.speed_max}},
                          {"turn_rate", motion.turn_rate},
                          {"phase_probabilities", {motion.p_walk, motion.p_pause, motion.p_turn}},
                          {"phase_frames", {motion.phase_min, motion.phase_max}}}}};
    return j.dump();
}

ExoProjection ExoProjection::for_config(const WorldConfig& cfg) {
    ExoProjection p;
    p.scale = (cfg.exo_width - 10.0) / cfg.arena;
    p.ox = 5.0;
    p.box_w = std::max(2, round_int(1.1 * p.scale));
    p.box_h = std::max(3, round_int(1.85 * p.scale));
    // centre the band of possible boxes vertically
    p.oy = (cfg.exo_height + p.box_h - p.squash * p.scale * cfg.arena) / 2.0;
    return p;
}

BBox ExoProjection::box_at(double x, double y, int person) const {
    const auto [u, v] = project(x, y);
    return {round_int(u) - box_w / 2, round_int(v) - box_h, box_w, box_h, person};
}

Trajectories simulate(const WorldConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const double lo = kArenaMargin, hi = cfg.arena - kArenaMargin;
    std::vector<AgentState> s(cfg.agents);
    std::vector<int> timer(cfg.agents);
    for (int i = 0; i < cfg.agents; ++i) {
        s[i].x = rng.uniform(lo + 0.5, hi - 0.5);
        s[i].y = rng.uniform(lo + 0.5, hi - 0.5);
        s[i].heading = wrap_angle(rng.uniform(-kPi, kPi));
        start_phase(s[i], timer[i], cfg.profile(i), rng);
    }
    Trajectories out;
    out.reserve(cfg.frames);
    out.push_back(s);
    for (int f = 1; f < cfg.frames; ++f) {
        for (int i = 0; i < cfg.agents; ++i) {
            if (timer[i] <= 0) start_phase(s[i], timer[i], cfg.profile(i), rng);
            AgentState& a = s[i];
            const MotionProfile m = cfg.profile(i);
            double turn = a.turn;
            // steer back toward the middle before reaching a wall
            const double nx = a.x + 4.0 * a.speed * std::cos(a.heading);
            const double ny = a.y + 4.0 * a.speed * std::sin(a.heading);
            if (a.speed > 0 && m.turn_rate > 0 && (nx < lo + 1.0 || nx > hi - 1.0 || ny < lo + 1.0 || ny > hi - 1.0)) {
                const double want = std::atan2(cfg.arena / 2 - a.y, cfg.arena / 2 - a.x);
                const double limit = 2.0 * m.turn_rate;
                turn = std::clamp(wrap_angle(want - a.heading), -limit, limit);
            }
            a.heading = wrap_angle(a.heading + turn);
            a.x += a.speed * std::cos(a.heading);
            a.y += a.speed * std::sin(a.heading);
            reflect(a.x, a.heading, lo, hi, true);
            reflect(a.y, a.heading, lo, hi, false);
            a.heading = wrap_angle(a.heading);
            --timer[i];
        }
        out.push_back(s);
    }
    return out;
}

Dataset render(const WorldConfig& cfg, const Trajectories& states) {
    cfg.validate();
    if (static_cast<int>(states.size()) != cfg.frames) throw std::invalid_argument("trajectory length differs from frame count");
    const ExoProjection proj = ExoProjection::for_config(cfg);
    const int W = cfg.exo_width, H = cfg.exo_height, S = cfg.ego_size, K = cfg.agents;

    Dataset d;
    d.frames = cfg.frames;
    d.fps = cfg.fps;
    const int split = std::clamp(static_cast<int>(std::lround(cfg.frames * cfg.train_fraction)), 1, cfg.frames - 1);
    d.train = {0, split};
    d.test = {split, cfg.frames};
    d.generator = cfg.to_json();
    d.cameras.push_back({"exo", CameraKind::exo, -1, W, H});
    for (int w = 0; w < cfg.wearers; ++w) d.cameras.push_back({"ego" + std::to_string(w), CameraKind::ego, w, S, S});
    for (int i = 0; i < K; ++i) d.persons.push_back({i, cfg.palette[i]});

    // static exo background
    Image exo_bg(W, H);
    for (int py = 0; py < H; ++py)
        for (int px = 0; px < W; ++px) {
            const double x = (px + 0.5 - proj.ox) / proj.scale;
            const double y = (py + 0.5 - proj.oy) / (proj.squash * proj.scale);
            Color c = kOutside;
            if (x >= 0 && x < cfg.arena && y >= 0 && y < cfg.arena) c = checker(x, y) ? kFloorA : kFloorB;
            else if (x >= 0 && x < cfg.arena && y < 0) c = static_cast<long>(std::floor(x)) % 2 ? kBackWallB : kBackWallA;
            put(exo_bg, px, py, c);
        }

    EgoRenderer ego(cfg);
    for (int f = 0; f < cfg.frames; ++f) {
        const auto& cur = states[f];
        const auto& before = states[f > 0 ? f - 1 : 0];

        // exo: far (small y) first so nearer people overwrite
        Image img = exo_bg;
        FlowField flow(W, H);
        std::vector<int> owner(static_cast<std::size_t>(W) * H, -1);
        std::vector<int> order(K);
        for (int i = 0; i < K; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return cur[a].y < cur[b].y; });
        std::vector<BBox> boxes(K);
        for (int i : order) {
            boxes[i] = proj.box_at(cur[i].x, cur[i].y, i);
            const auto r = clip_box(boxes[i], W, H);
            if (!r) continue;
            const double fu = f > 0 ? proj.scale * (cur[i].x - before[i].x) : 0.0;
            const double fv = f > 0 ? proj.squash * proj.scale * (cur[i].y - before[i].y) : 0.0;
            for (int y = r->y0; y < r->y1; ++y)
                for (int x = r->x0; x < r->x1; ++x) {
                    put(img, x, y, cfg.palette[i]);
                    owner[static_cast<std::size_t>(y) * W + x] = i;
                    flow.u(x, y) = fu;
                    flow.v(x, y) = fv;
                }
            const int cx = boxes[i].x + boxes[i].w / 2, cy = boxes[i].y + boxes[i].h / 2;
            for (int k = 1; k <= 2; ++k) {
                const int tx = cx + round_int(k * std::cos(cur[i].heading));
                const int ty = cy + round_int(k * proj.squash * std::sin(cur[i].heading));
                if (tx >= r->x0 && tx < r->x1 && ty >= r->y0 && ty < r->y1) put(img, tx, ty, kTick);
            }
        }
        for (int i = 0; i < K; ++i) {
            const auto r = clip_box(boxes[i], W, H);
            if (!r) continue;
            int own = 0;
            for (int y = r->y0; y < r->y1; ++y)
                for (int x = r->x0; x < r->x1; ++x) own += owner[static_cast<std::size_t>(y) * W + x] == i;
            const double hidden = 1.0 - static_cast<double>(own) / (r->width() * r->height());
            d.annotations.push_back({f, "exo", i, r->x0, r->y0, r->width(), r->height(), hidden <= kOcclusionLimit});
        }
        d.images["exo"].push_back(std::move(img));
        d.flows["exo"].push_back(std::move(flow));

        for (int w = 0; w < cfg.wearers; ++w) {
            const std::string cam = "ego" + std::to_string(w);
            const Pose now{cur[w].x, cur[w].y, cur[w].heading};
            const Pose prev{before[w].x, before[w].y, before[w].heading};
            Image view(S, S);
            FlowField vflow(S, S);
            std::vector<int> vowner(static_cast<std::size_t>(S) * S, -1);
            for (int r = 0; r < S; ++r)
                for (int c = 0; c < S; ++c) {
                    const Hit hit = ego.trace(now, c, r, w, cur, cfg.palette.data());
                    put(view, c, r, hit.color);
                    vowner[static_cast<std::size_t>(r) * S + c] = hit.agent;
                    if (f > 0) {
                        const auto fl = ego.flow(now, prev, c, r, hit, cur, before);
                        vflow.u(c, r) = fl[0];
                        vflow.v(c, r) = fl[1];
                    }
                }

            // boxes of the people this wearer can see
            const double fx = std::cos(now.phi), fy = std::sin(now.phi);
            for (int j = 0; j < K; ++j) {
                if (j == w) continue;
                const double ox = cur[j].x - now.x, oy = cur[j].y - now.y;
                const double tj = ox * fx + oy * fy;
                if (tj < 0.2) continue;
                const double lj = ox * fy - oy * fx;
                const double fo = ego.focal();
                const double c0 = S / 2.0 + fo * (lj - kAgentRadius) / tj, c1 = S / 2.0 + fo * (lj + kAgentRadius) / tj;
                const double r0 = S / 2.0 - fo * (kAgentHeight - kEyeHeight) / tj, r1 = S / 2.0 + fo * kEyeHeight / tj;
                const int bx = static_cast<int>(std::floor(c0)), by = static_cast<int>(std::floor(r0));
                const BBox raw{bx, by, static_cast<int>(std::ceil(c1)) - bx, static_cast<int>(std::ceil(r1)) - by, j};
                const auto r = clip_box(raw, S, S);
                if (!r) continue;
                int own = 0;
                for (int y = r->y0; y < r->y1; ++y)
                    for (int x = r->x0; x < r->x1; ++x) own += vowner[static_cast<std::size_t>(y) * S + x] == j;
                const double hidden = 1.0 - static_cast<double>(own) / (r->width() * r->height());
                d.annotations.push_back({f, cam, j, r->x0, r->y0, r->width(), r->height(), hidden <= kOcclusionLimit});
            }

            d.images[cam].push_back(std::move(view));
            d.flows[cam].push_back(std::move(vflow));

            const double omega = f > 0 ? wrap_angle(now.phi - prev.phi) : 0.0;
            d.odometry[cam].push_back({now.x, now.y, kEyeHeight, std::cos(now.phi / 2), 0.0, 0.0, std::sin(now.phi / 2),
                                       0.0, 0.0, omega, now.x - prev.x, now.y - prev.y, 0.0});
        }
    }
    d.reindex();
    return d;
}

}  // namespace egomatch
