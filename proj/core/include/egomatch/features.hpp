#ifndef EGOMATCH_FEATURES_HPP
#define EGOMATCH_FEATURES_HPP

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "egomatch/tensor.hpp"

namespace egomatch {

/// Input data that does not satisfy an operation's preconditions
/// (box outside the frame, wrong flow count, malformed file).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// RGB frame, values in [0,1], stored pixel-interleaved row-major.
struct Image {
    Image() = default;
    Image(int w, int h, float fill = 0.0f);

    int width = 0;
    int height = 0;
    std::vector<float> values;

    float& at(int x, int y, int c) { return values[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int x, int y, int c) const { return values[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Dense displacement field in pixels/frame, (u,v) pairs row-major.
/// Files store float32; values read from disk are exactly representable.
struct FlowField {
    FlowField() = default;
    FlowField(int w, int h, double u = 0.0, double v = 0.0);

    int width = 0;
    int height = 0;
    std::vector<double> uv;

    double& u(int x, int y) { return uv[(static_cast<std::size_t>(y) * width + x) * 2]; }
    double& v(int x, int y) { return uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
    double u(int x, int y) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2]; }
    double v(int x, int y) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }

    friend bool operator==(const FlowField&, const FlowField&) = default;
};

struct BBox {
    int x = 0;
    int y = 0;
    int w = 1;
    int h = 1;
    int person_id = -1;

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Half-open pixel rectangle [x0,x1) x [y0,y1).
struct PixelRect {
    int x0, y0, x1, y1;
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
};

/// Box clipped to a width x height raster, or nullopt when they do not overlap.
std::optional<PixelRect> clip_box(const BBox& box, int width, int height);

inline constexpr int kHoofGrid = 3;
inline constexpr int kHoofBins = 5;
inline constexpr int kHoofSize = kHoofGrid * kHoofGrid * kHoofBins;
using HoofVector = std::array<double, kHoofSize>;

inline constexpr int kFlowStackDepth = 5;

/// Frame with the box region set to black. Throws DataError if the box misses the frame.
Image mask_person(const Image& frame, const BBox& box);

/// Box region of the field resized to out_w x out_h by nearest neighbour;
/// flow values are carried unscaled. Throws DataError if the box misses the field.
FlowField crop_flow(const FlowField& flow, const BBox& box, int out_w, int out_h);

/// Nearest-neighbour resize of a whole field (values unscaled).
FlowField resize_flow(const FlowField& flow, int out_w, int out_h);
Image resize_image(const Image& image, int out_w, int out_h);

/// Five equal-size fields to a [10,H,W] tensor with channels u1,v1,...,u5,v5.
Tensor stack_flows(std::span<const FlowField> flows);

/// Image to a [3,H,W] tensor.
Tensor image_tensor(const Image& image);

/// 3x3 grid of 5-bin magnitude-weighted angle histograms, each cell
/// L1-normalized (zero-flow cells stay zero). Bins split [-pi,pi) evenly;
/// remainder pixels belong to the last row/column of cells.
HoofVector hoof(const FlowField& flow);

/// Elementwise mean of 1..window histograms.
HoofVector hoof_window(std::span<const HoofVector> hoofs, std::size_t window = 10);

double mean_flow_magnitude(const FlowField& flow);

}  // namespace egomatch

#endif  // EGOMATCH_FEATURES_HPP
