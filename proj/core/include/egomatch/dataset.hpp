#ifndef EGOMATCH_DATASET_HPP
#define EGOMATCH_DATASET_HPP

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egomatch/features.hpp"

namespace egomatch {

enum class CameraKind { ego, exo };

struct CameraInfo {
    std::string id;
    CameraKind kind = CameraKind::exo;
    int wearer = -1;  // person wearing an ego camera
    int width = 0;
    int height = 0;

    friend bool operator==(const CameraInfo&, const CameraInfo&) = default;
};

/// One person box in one camera's frame.
struct Annotation {
    int frame = 0;
    std::string camera;
    int person = 0;
    int x = 0, y = 0, w = 0, h = 0;
    bool visible = true;

    BBox box() const { return {x, y, w, h, person}; }
    friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Position (3), orientation quaternion w,x,y,z (4), angular velocity (3),
/// linear velocity (3) of an ego camera at one frame.
using OdometryVector = std::array<double, 13>;

struct PersonInfo {
    int id = 0;
    std::array<float, 3> color{};
    friend bool operator==(const PersonInfo&, const PersonInfo&) = default;
};

/// Half-open frame range [begin, end).
struct FrameRange {
    int begin = 0;
    int end = 0;
    bool contains(int f) const { return f >= begin && f < end; }
    int size() const { return end - begin; }
    friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

/// Synchronised multi-camera sequence held fully in memory.
struct Dataset {
    std::vector<CameraInfo> cameras;
    std::vector<PersonInfo> persons;
    int frames = 0;
    double fps = 10.0;
    FrameRange train, test;
    std::vector<Annotation> annotations;
    std::map<std::string, std::vector<Image>> images;      // camera -> frames
    std::map<std::string, std::vector<FlowField>> flows;   // camera -> frames, flow[0] is zero
    std::map<std::string, std::vector<OdometryVector>> odometry;  // optional, ego cameras
    std::string generator;  // free-form JSON describing how the data was made

    const CameraInfo& camera(const std::string& id) const;
    const CameraInfo* find_camera(const std::string& id) const;
    std::vector<const CameraInfo*> ego_cameras() const;
    /// The first exo camera.
    const CameraInfo& exo_camera() const;

    /// Boxes of one camera at one frame, ordered by person id.
    std::vector<Annotation> boxes(int frame, const std::string& camera) const;
    std::optional<Annotation> box(int frame, const std::string& camera, int person) const;

    /// Rebuilds the (frame, camera) box index; call after editing annotations.
    void reindex();

private:
    std::map<std::pair<int, std::string>, std::vector<std::size_t>> index_;
};

/// Writes manifest.json, frames/<cam>/<i>.ppm, flow/<cam>/<i>.flo,
/// annotations.csv and odometry/<cam>.csv. Output is byte-identical for equal datasets.
void export_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Reads a dataset written by export_dataset. Throws DataError naming the offending file.
Dataset load_dataset(const std::filesystem::path& dir);

std::string frame_file_name(int index);

}  // namespace egomatch

#endif  // EGOMATCH_DATASET_HPP
