#include "egomatch/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace egomatch {

Image::Image(int w, int h, float fill) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw DataError("image dimensions must be positive");
    values.assign(static_cast<std::size_t>(w) * h * 3, fill);
}

FlowField::FlowField(int w, int h, double u0, double v0) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw DataError("flow dimensions must be positive");
    uv.resize(static_cast<std::size_t>(w) * h * 2);
    for (std::size_t i = 0; i < uv.size(); i += 2) {
        uv[i] = u0;
        uv[i + 1] = v0;
    }
}

std::optional<PixelRect> clip_box(const BBox& box, int width, int height) {
    PixelRect r{std::max(box.x, 0), std::max(box.y, 0), std::min(box.x + box.w, width),
                std::min(box.y + box.h, height)};
    if (r.x0 >= r.x1 || r.y0 >= r.y1) return std::nullopt;
    return r;
}

namespace {

std::string box_str(const BBox& b) {
    return "box (" + std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.w) + "," +
           std::to_string(b.h) + ") of person " + std::to_string(b.person_id);
}

PixelRect require_overlap(const BBox& box, int width, int height) {
    auto r = clip_box(box, width, height);
    if (!r) {
        throw DataError(box_str(box) + " lies outside the " + std::to_string(width) + "x" + std::to_string(height) +
                        " frame");
    }
    return *r;
}

// Source coordinate for output index i when mapping n_src pixels onto n_out.
int nearest(int i, int n_out, int n_src) {
    const int s = static_cast<int>((static_cast<long long>(2 * i + 1) * n_src) / (2LL * n_out));
    return std::min(s, n_src - 1);
}

FlowField resample(const FlowField& flow, const PixelRect& r, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw DataError("output size must be positive");
    FlowField out(out_w, out_h);
    for (int oy = 0; oy < out_h; ++oy) {
        const int sy = r.y0 + nearest(oy, out_h, r.height());
        for (int ox = 0; ox < out_w; ++ox) {
            const int sx = r.x0 + nearest(ox, out_w, r.width());
            out.u(ox, oy) = flow.u(sx, sy);
            out.v(ox, oy) = flow.v(sx, sy);
        }
    }
    return out;
}

}  // namespace

Image mask_person(const Image& frame, const BBox& box) {
    const PixelRect r = require_overlap(box, frame.width, frame.height);
    Image out = frame;
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = 0.0f;
    return out;
}

FlowField crop_flow(const FlowField& flow, const BBox& box, int out_w, int out_h) {
    return resample(flow, require_overlap(box, flow.width, flow.height), out_w, out_h);
}

FlowField resize_flow(const FlowField& flow, int out_w, int out_h) {
    return resample(flow, PixelRect{0, 0, flow.width, flow.height}, out_w, out_h);
}

Image resize_image(const Image& image, int out_w, int out_h) {
    if (out_w == image.width && out_h == image.height) return image;
    Image out(out_w, out_h);
    for (int oy = 0; oy < out_h; ++oy) {
        const int sy = nearest(oy, out_h, image.height);
        for (int ox = 0; ox < out_w; ++ox) {
            const int sx = nearest(ox, out_w, image.width);
            for (int c = 0; c < 3; ++c) out.at(ox, oy, c) = image.at(sx, sy, c);
        }
    }
    return out;
}

Tensor stack_flows(std::span<const FlowField> flows) {
    if (flows.size() != static_cast<std::size_t>(kFlowStackDepth)) {
        throw DataError("stack_flows needs exactly 5 fields, got " + std::to_string(flows.size()));
    }
    const int w = flows[0].width, h = flows[0].height;
    for (const FlowField& f : flows) {
        if (f.width != w || f.height != h) {
            throw DataError("stack_flows: field " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                            " differs from " + std::to_string(w) + "x" + std::to_string(h));
        }
    }
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    Tensor out(Shape{2 * flows.size(), static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (std::size_t k = 0; k < flows.size(); ++k) {
        double* u = out.ptr() + (2 * k) * plane;
        double* v = out.ptr() + (2 * k + 1) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            u[i] = flows[k].uv[2 * i];
            v[i] = flows[k].uv[2 * i + 1];
        }
    }
    return out;
}

Tensor image_tensor(const Image& image) {
    const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
    Tensor out(Shape{3, static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width)});
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = image.values[i * 3 + c];
    return out;
}

HoofVector hoof(const FlowField& flow) {
    if (flow.width < kHoofGrid || flow.height < kHoofGrid) throw DataError("hoof needs a field of at least 3x3");
    HoofVector h{};
    const int cw = flow.width / kHoofGrid, ch = flow.height / kHoofGrid;
    const double bin_width = 2.0 * std::numbers::pi / kHoofBins;
    for (int y = 0; y < flow.height; ++y) {
        const int gy = std::min(y / ch, kHoofGrid - 1);
        for (int x = 0; x < flow.width; ++x) {
            const int gx = std::min(x / cw, kHoofGrid - 1);
            const double u = flow.u(x, y), v = flow.v(x, y);
            const double mag = std::sqrt(u * u + v * v);
            if (mag == 0.0) continue;
            double angle = std::atan2(v, u);
            if (angle >= std::numbers::pi) angle = -std::numbers::pi;
            const int bin = std::clamp(static_cast<int>(std::floor((angle + std::numbers::pi) / bin_width)), 0,
                                       kHoofBins - 1);
            h[(gy * kHoofGrid + gx) * kHoofBins + bin] += mag;
        }
    }
    for (int cell = 0; cell < kHoofGrid * kHoofGrid; ++cell) {
        double total = 0.0;
        for (int b = 0; b < kHoofBins; ++b) total += h[cell * kHoofBins + b];
        if (total > 0.0)
            for (int b = 0; b < kHoofBins; ++b) h[cell * kHoofBins + b] /= total;
    }
    return h;
}

HoofVector hoof_window(std::span<const HoofVector> hoofs, std::size_t window) {
    if (hoofs.empty()) throw DataError("hoof_window of an empty sequence");
    if (hoofs.size() > window) {
        throw DataError("hoof_window got " + std::to_string(hoofs.size()) + " histograms for a window of " +
                        std::to_string(window));
    }
    HoofVector mean{};
    for (const HoofVector& h : hoofs)
        for (int i = 0; i < kHoofSize; ++i) mean[i] += h[i];
    for (double& v : mean) v /= static_cast<double>(hoofs.size());
    return mean;
}

double mean_flow_magnitude(const FlowField& flow) {
    const std::size_t n = flow.uv.size() / 2;
    if (n == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = flow.uv[2 * i], v = flow.uv[2 * i + 1];
        total += std::sqrt(u * u + v * v);
    }
    return total / static_cast<double>(n);
}

}  // namespace egomatch
