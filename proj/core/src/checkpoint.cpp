#include "egomatch/checkpoint.hpp"

#include <json.hpp>

#include "egomatch/features.hpp"
#include "egomatch/image_io.hpp"
#include "le_bytes.hpp"

namespace egomatch {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'E', 'G', 'M', '1'};

std::string_view kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::pool: return "pool";
        case LayerKind::relu: return "relu";
        case LayerKind::linear: return "linear";
    }
    return "?";
}

LayerKind parse_kind(const std::string& s) {
    if (s == "conv") return LayerKind::conv;
    if (s == "pool") return LayerKind::pool;
    if (s == "relu") return LayerKind::relu;
    if (s == "linear") return LayerKind::linear;
    throw SpecError("unknown layer kind '" + s + "'");
}

json layers_json(const std::vector<LayerSpec>& layers) {
    json out = json::array();
    for (const LayerSpec& l : layers) {
        out.push_back({{"kind", kind_name(l.kind)}, {"units", l.units}, {"kernel", l.kernel},
                       {"stride", l.stride}, {"pad", l.pad}});
    }
    return out;
}

std::vector<LayerSpec> layers_from(const json& j) {
    std::vector<LayerSpec> out;
    for (const json& l : j) {
        out.push_back({parse_kind(l.at("kind").get<std::string>()), l.at("units").get<int>(),
                       l.at("kernel").get<int>(), l.at("stride").get<int>(), l.at("pad").get<int>()});
    }
    return out;
}

json spec_json(const NetworkSpec& spec) {
    json streams = json::array();
    for (const StreamSpec& s : spec.streams) {
        streams.push_back({{"name", s.name},
                           {"input", to_string(s.input)},
                           {"size", s.size},
                           {"early", layers_json(s.early)},
                           {"late", layers_json(s.late)}});
    }
    return {{"architecture", to_string(spec.architecture)},
            {"sharing", to_string(spec.sharing)},
            {"embedding_dim", spec.embedding_dim},
            {"streams", streams},
            {"fusion", layers_json(spec.fusion)}};
}

NetworkSpec spec_from(const json& j) {
    try {
        NetworkSpec spec;
        spec.architecture = parse_architecture(j.at("architecture").get<std::string>());
        spec.sharing = parse_sharing(j.at("sharing").get<std::string>());
        spec.embedding_dim = j.at("embedding_dim").get<int>();
        for (const json& s : j.at("streams")) {
            StreamSpec st;
            st.name = s.at("name").get<std::string>();
            const std::string input = s.at("input").get<std::string>();
            if (input == "image") st.input = InputKind::image;
            else if (input == "flowstack") st.input = InputKind::flowstack;
            else throw SpecError("unknown input kind '" + input + "'");
            st.size = s.at("size").get<int>();
            st.early = layers_from(s.at("early"));
            st.late = layers_from(s.at("late"));
            spec.streams.push_back(std::move(st));
        }
        spec.fusion = layers_from(j.at("fusion"));
        validate_spec(spec);
        return spec;
    } catch (const json::exception& e) {
        throw SpecError(std::string("malformed network spec: ") + e.what());
    }
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) { return spec_json(spec).dump(); }

NetworkSpec spec_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SpecError(std::string("network spec is not valid JSON: ") + e.what());
    }
    return spec_from(j);
}

std::vector<std::uint8_t> encode_checkpoint(const EmbeddingNet& net, const CheckpointMeta& meta) {
    json params = json::array();
    for (const auto& e : net.params().entries()) {
        params.push_back({{"group", to_string(e.group)}, {"name", e.param->name}, {"shape", e.param->value.shape()}});
    }
    const json header = {{"spec", spec_json(net.spec())}, {"meta", meta}, {"parameters", params}};
    const std::string text = header.dump();

    std::vector<std::uint8_t> out{'E', 'G', 'M', '1'};
    detail::put_le(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    out.reserve(out.size() + 8 * net.params().count());
    for (const auto& e : net.params().entries())
        for (double v : e.param->value.data()) detail::put_le(out, v);
    return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
        throw DataError("not a checkpoint (missing EGM1 magic)");
    }
    const std::size_t header_len = detail::get_le<std::uint32_t>(bytes.data() + 4);
    if (bytes.size() < 8 + header_len) throw DataError("truncated checkpoint header");
    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    try {
        NetworkSpec spec = spec_from(header.at("spec"));
        CheckpointMeta meta = header.value("meta", json::object()).get<CheckpointMeta>();
        ParameterStore store;
        std::size_t offset = 8 + header_len;
        for (const json& p : header.at("parameters")) {
            const Shape shape = p.at("shape").get<Shape>();
            const std::size_t n = shape_numel(shape);
            if (bytes.size() < offset + 8 * n) throw DataError("truncated checkpoint payload");
            Tensor t(shape);
            for (std::size_t i = 0; i < n; ++i) t[i] = detail::get_le<double>(bytes.data() + offset + 8 * i);
            offset += 8 * n;
            store.add(parse_group(p.at("group").get<std::string>()), p.at("name").get<std::string>(), std::move(t));
        }
        if (offset != bytes.size()) {
            throw DataError("checkpoint has " + std::to_string(bytes.size() - offset) + " trailing bytes");
        }
        return Checkpoint{EmbeddingNet(std::move(spec), std::move(store)), std::move(meta)};
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed checkpoint header: ") + e.what());
    } catch (const SpecError& e) {
        throw DataError(std::string("checkpoint does not match its spec: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const EmbeddingNet& net, const CheckpointMeta& meta) {
    write_file_bytes(path, encode_checkpoint(net, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace egomatch
