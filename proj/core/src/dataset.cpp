#include "egomatch/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "egomatch/image_io.hpp"

namespace egomatch {

namespace fs = std::filesystem;
using nlohmann::json;

const CameraInfo* Dataset::find_camera(const std::string& id) const {
    for (const CameraInfo& c : cameras)
        if (c.id == id) return &c;
    return nullptr;
}

const CameraInfo& Dataset::camera(const std::string& id) const {
    const CameraInfo* c = find_camera(id);
    if (!c) throw DataError("dataset has no camera '" + id + "'");
    return *c;
}

std::vector<const CameraInfo*> Dataset::ego_cameras() const {
    std::vector<const CameraInfo*> out;
    for (const CameraInfo& c : cameras)
        if (c.kind == CameraKind::ego) out.push_back(&c);
    return out;
}

const CameraInfo& Dataset::exo_camera() const {
    for (const CameraInfo& c : cameras)
        if (c.kind == CameraKind::exo) return c;
    throw DataError("dataset has no exo camera");
}

void Dataset::reindex() {
    index_.clear();
    for (std::size_t i = 0; i < annotations.size(); ++i)
        index_[{annotations[i].frame, annotations[i].camera}].push_back(i);
    for (auto& [key, ids] : index_) {
        std::sort(ids.begin(), ids.end(),
                  [&](std::size_t a, std::size_t b) { return annotations[a].person < annotations[b].person; });
    }
}

std::vector<Annotation> Dataset::boxes(int frame, const std::string& camera) const {
    std::vector<Annotation> out;
    auto it = index_.find({frame, camera});
    if (it == index_.end()) return out;
    for (std::size_t i : it->second) out.push_back(annotations[i]);
    return out;
}

std::optional<Annotation> Dataset::box(int frame, const std::string& camera, int person) const {
    auto it = index_.find({frame, camera});
    if (it == index_.end()) return std::nullopt;
    for (std::size_t i : it->second)
        if (annotations[i].person == person) return annotations[i];
    return std::nullopt;
}

std::string frame_file_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d", index);
    return buf;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text(const fs::path& path) {
    auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <class T>
T parse_num(const std::string& s, const fs::path& file, std::size_t line) {
    T v{};
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        throw DataError(file.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
    }
    return v;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

constexpr const char* kAnnotationHeader = "frame,camera,person,x,y,w,h,visible";
constexpr const char* kOdometryHeader = "px,py,pz,qw,qx,qy,qz,wx,wy,wz,vx,vy,vz";

}  // namespace

void export_dataset(const Dataset& data, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

    json cams = json::array();
    for (const CameraInfo& c : data.cameras) {
        json j = {{"id", c.id},
                  {"kind", c.kind == CameraKind::ego ? "ego" : "exo"},
                  {"width", c.width},
                  {"height", c.height},
                  {"frames", "frames/" + c.id},
                  {"flow", "flow/" + c.id}};
        if (c.kind == CameraKind::ego) j["wearer"] = c.wearer;
        cams.push_back(j);
    }
    json persons = json::array();
    for (const PersonInfo& p : data.persons) persons.push_back({{"id", p.id}, {"color", p.color}});
    json odom = json::object();
    for (const auto& [cam, rows] : data.odometry) odom[cam] = "odometry/" + cam + ".csv";

    json manifest = {{"format", "egomatch-dataset-1"},
                     {"frames", data.frames},
                     {"fps", data.fps},
                     {"cameras", cams},
                     {"persons", persons},
                     {"splits", {{"train", {data.train.begin, data.train.end}}, {"test", {data.test.begin, data.test.end}}}},
                     {"annotations", "annotations.csv"},
                     {"odometry", odom},
                     {"generator", data.generator.empty() ? json::object() : json::parse(data.generator)}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    for (const CameraInfo& c : data.cameras) {
        const fs::path fdir = dir / "frames" / c.id, vdir = dir / "flow" / c.id;
        fs::create_directories(fdir);
        fs::create_directories(vdir);
        const auto& imgs = data.images.at(c.id);
        const auto& flows = data.flows.at(c.id);
        for (int i = 0; i < data.frames; ++i) {
            write_ppm(fdir / (frame_file_name(i) + ".ppm"), imgs.at(i));
            write_flo(vdir / (frame_file_name(i) + ".flo"), flows.at(i));
        }
    }

    std::string csv = std::string(kAnnotationHeader) + "\n";
    for (const Annotation& a : data.annotations) {
        csv += std::to_string(a.frame) + "," + a.camera + "," + std::to_string(a.person) + "," + std::to_string(a.x) +
               "," + std::to_string(a.y) + "," + std::to_string(a.w) + "," + std::to_string(a.h) + "," +
               (a.visible ? "1" : "0") + "\n";
    }
    write_text(dir / "annotations.csv", csv);

    if (!data.odometry.empty()) fs::create_directories(dir / "odometry");
    for (const auto& [cam, rows] : data.odometry) {
        std::string text = std::string(kOdometryHeader) + "\n";
        for (const OdometryVector& r : rows) {
            for (std::size_t k = 0; k < r.size(); ++k) text += (k ? "," : "") + fmt_double(r[k]);
            text += "\n";
        }
        write_text(dir / "odometry" / (cam + ".csv"), text);
    }
}

Dataset load_dataset(const fs::path& dir) {
    const fs::path mpath = dir / "manifest.json";
    Dataset d;
    json m;
    try {
        m = json::parse(read_text(mpath));
    } catch (const json::exception& e) {
        throw DataError(mpath.string() + ": " + e.what());
    }
    try {
        d.frames = m.at("frames").get<int>();
        d.fps = m.at("fps").get<double>();
        if (d.frames <= 0) throw DataError("frame count must be positive");
        for (const json& c : m.at("cameras")) {
            CameraInfo ci;
            ci.id = c.at("id").get<std::string>();
            const std::string kind = c.at("kind").get<std::string>();
            if (kind == "ego") {
                ci.kind = CameraKind::ego;
                ci.wearer = c.at("wearer").get<int>();
            } else if (kind == "exo") {
                ci.kind = CameraKind::exo;
            } else {
                throw DataError("camera " + ci.id + " has unknown kind '" + kind + "'");
            }
            ci.width = c.at("width").get<int>();
            ci.height = c.at("height").get<int>();
            if (ci.id.empty() || ci.id.find_first_of(",/\\") != std::string::npos)
                throw DataError("bad camera id '" + ci.id + "'");
            if (d.find_camera(ci.id)) throw DataError("duplicate camera " + ci.id);
            d.cameras.push_back(ci);
        }
        for (const json& p : m.at("persons"))
            d.persons.push_back({p.at("id").get<int>(), p.at("color").get<std::array<float, 3>>()});
        const auto tr = m.at("splits").at("train").get<std::array<int, 2>>();
        const auto te = m.at("splits").at("test").get<std::array<int, 2>>();
        d.train = {tr[0], tr[1]};
        d.test = {te[0], te[1]};
        for (const FrameRange& r : {d.train, d.test})
            if (r.begin < 0 || r.end > d.frames || r.begin >= r.end) throw DataError("split outside the frame range");
        if (m.contains("generator") && !m["generator"].empty()) d.generator = m["generator"].dump();
        const json odom = m.value("odometry", json::object());
        for (const auto& [cam, rel] : odom.items()) {
            const fs::path p = dir / rel.get<std::string>();
            const auto lines = read_lines(p);
            if (lines.empty() || lines[0] != kOdometryHeader) throw DataError(p.string() + ": bad header");
            std::vector<OdometryVector> rows;
            for (std::size_t i = 1; i < lines.size(); ++i) {
                if (lines[i].empty()) continue;
                const auto cells = split_csv(lines[i]);
                if (cells.size() != 13) throw DataError(p.string() + ":" + std::to_string(i + 1) + ": expected 13 columns");
                OdometryVector r{};
                for (std::size_t k = 0; k < 13; ++k) r[k] = parse_num<double>(cells[k], p, i + 1);
                rows.push_back(r);
            }
            if (static_cast<int>(rows.size()) != d.frames) throw DataError(p.string() + ": row count differs from frame count");
            d.odometry[cam] = std::move(rows);
        }
    } catch (const json::exception& e) {
        throw DataError(mpath.string() + ": " + e.what());
    } catch (const DataError& e) {
        const std::string what = e.what();
        if (what.rfind(dir.string(), 0) == 0) throw;
        throw DataError(mpath.string() + ": " + what);
    }
    if (d.cameras.empty()) throw DataError(mpath.string() + ": no cameras");

    for (const CameraInfo& c : d.cameras) {
        auto& imgs = d.images[c.id];
        auto& flows = d.flows[c.id];
        imgs.reserve(d.frames);
        flows.reserve(d.frames);
        for (int i = 0; i < d.frames; ++i) {
            const fs::path ip = dir / "frames" / c.id / (frame_file_name(i) + ".ppm");
            const fs::path fp = dir / "flow" / c.id / (frame_file_name(i) + ".flo");
            imgs.push_back(read_ppm(ip));
            flows.push_back(read_flo(fp));
            if (imgs.back().width != c.width || imgs.back().height != c.height)
                throw DataError(ip.string() + ": size differs from camera " + c.id);
            if (flows.back().width != c.width || flows.back().height != c.height)
                throw DataError(fp.string() + ": size differs from camera " + c.id);
        }
    }

    const fs::path apath = dir / "annotations.csv";
    const auto lines = read_lines(apath);
    if (lines.empty() || lines[0] != kAnnotationHeader) throw DataError(apath.string() + ": bad header");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto cells = split_csv(lines[i]);
        const std::string where = apath.string() + ":" + std::to_string(i + 1);
        if (cells.size() != 8) throw DataError(where + ": expected 8 columns");
        Annotation a;
        a.frame = parse_num<int>(cells[0], apath, i + 1);
        a.camera = cells[1];
        a.person = parse_num<int>(cells[2], apath, i + 1);
        a.x = parse_num<int>(cells[3], apath, i + 1);
        a.y = parse_num<int>(cells[4], apath, i + 1);
        a.w = parse_num<int>(cells[5], apath, i + 1);
        a.h = parse_num<int>(cells[6], apath, i + 1);
        const int vis = parse_num<int>(cells[7], apath, i + 1);
        if (vis != 0 && vis != 1) throw DataError(where + ": visible must be 0 or 1");
        a.visible = vis == 1;
        if (a.frame < 0 || a.frame >= d.frames) throw DataError(where + ": frame out of range");
        const CameraInfo* cam = d.find_camera(a.camera);
        if (!cam) throw DataError(where + ": unknown camera '" + a.camera + "'");
        if (a.w <= 0 || a.h <= 0) throw DataError(where + ": box must have positive size");
        if (!clip_box(a.box(), cam->width, cam->height)) throw DataError(where + ": box lies outside the frame");
        d.annotations.push_back(a);
    }
    d.reindex();
    return d;
}

}  // namespace egomatch
