#ifndef EGOMATCH_SYNTHWORLD_HPP
#define EGOMATCH_SYNTHWORLD_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "egomatch/dataset.hpp"

namespace egomatch {

enum class Phase { walk, pause, turn };

struct MotionProfile {
    double speed_min = 0.08;  // world units per frame
    double speed_max = 0.3;
    double turn_rate = 0.05;  // max |heading change| per frame while turning
    double p_walk = 0.4;
    double p_pause = 0.3;
    double p_turn = 0.3;
    int phase_min = 8;        // phase durations in frames
    int phase_max = 30;
};

struct WorldConfig {
    double arena = 10.0;
    int agents = 3;
    int wearers = 2;
    int frames = 700;
    std::uint64_t seed = 7;
    int exo_width = 64;
    int exo_height = 64;
    int ego_size = 64;
    double fps = 10.0;
    /// Frames [0, round(frames * train_fraction)) form the training video.
    double train_fraction = 5.0 / 7.0;
    MotionProfile motion;
    /// Give every agent its own speed and pause statistics (fast, steady
    /// walkers through slow, often-paused ones) instead of one shared profile.
    bool distinct_motion = false;
    std::vector<std::array<float, 3>> palette = default_palette();

    static std::vector<std::array<float, 3>> default_palette();
    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;
    /// Motion statistics actually used for one agent.
    MotionProfile profile(int agent) const;
    std::string to_json() const;
};

struct AgentState {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;  // radians, (-pi, pi]
    double speed = 0.0;    // units per frame
    double turn = 0.0;     // heading change per frame
    Phase phase = Phase::walk;
};

/// trajectories[frame][agent]
using Trajectories = std::vector<std::vector<AgentState>>;

/// Fixed oblique exo view: u = ox + s*x, v = oy + squash*s*y (feet position).
struct ExoProjection {
    double scale = 1.0;
    double squash = 0.6;
    double ox = 0.0;
    double oy = 0.0;
    int box_w = 6;
    int box_h = 10;

    static ExoProjection for_config(const WorldConfig& cfg);
    std::array<double, 2> project(double x, double y) const { return {ox + scale * x, oy + squash * scale * y}; }
    /// Person box for feet at world (x, y), before clipping.
    BBox box_at(double x, double y, int person) const;
};

inline constexpr double kEyeHeight = 1.5;
inline constexpr double kAgentHeight = 1.8;
inline constexpr double kAgentRadius = 0.3;
inline constexpr double kWallHeight = 2.5;
inline constexpr double kArenaMargin = 0.5;
/// Boxes more than this fraction hidden by nearer people are flagged not visible.
inline constexpr double kOcclusionLimit = 0.7;

/// Seeded walk / pause / turn-while-walking motion with reflective walls.
Trajectories simulate(const WorldConfig& cfg);

/// Exo frames, per-wearer forward views, analytic flow, boxes (exo and
/// cross-view), odometry and manifest fields. Ego cameras are "ego<k>" worn by person k.
Dataset render(const WorldConfig& cfg, const Trajectories& states);

inline Dataset generate(const WorldConfig& cfg) { return render(cfg, simulate(cfg)); }

}  // namespace egomatch

#endif  // EGOMATCH_SYNTHWORLD_HPP
