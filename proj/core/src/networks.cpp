#include "egomatch/networks.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "egomatch/ops.hpp"

namespace egomatch {

NetworkSpec default_spec(Architecture arch, SharingPolicy sharing, int embedding_dim) {
    if (embedding_dim <= 0) throw SpecError("embedding dimension must be positive");
    auto stream = [&](std::string name, InputKind input, int size) {
        StreamSpec s;
        s.name = std::move(name);
        s.input = input;
        s.size = size;
        using L = LayerSpec;
        s.early = {L::conv(8, 3, 1, 1),  L::relu(), L::pool(2, 2), L::conv(16, 3, 1, 1), L::relu(), L::pool(2, 2),
                   L::conv(16, 3, 1, 1), L::relu(), L::conv(32, 3, 1, 1), L::relu(), L::pool(2, 2)};
        s.late = {L::conv(32, 3, 1, 1), L::relu(), L::conv(32, 3, 1, 1), L::relu(),
                  L::linear(kFusionWidth), L::relu(), L::linear(embedding_dim)};
        return s;
    };
    NetworkSpec spec;
    spec.architecture = arch;
    spec.sharing = sharing;
    spec.embedding_dim = embedding_dim;
    if (arch != Architecture::temporal) spec.streams.push_back(stream("spatial", InputKind::image, kSpatialInputSize));
    if (arch != Architecture::spatial) spec.streams.push_back(stream("temporal", InputKind::flowstack, kFlowCropSize));
    if (arch == Architecture::two_stream)
        spec.fusion = {LayerSpec::linear(kFusionWidth), LayerSpec::relu(), LayerSpec::linear(embedding_dim)};
    return spec;
}

namespace {

struct ParamShape {
    Shape weight;
    Shape bias;
};

std::string layer_where(const std::string& stream, std::string_view stage, std::size_t index) {
    return stream + " " + std::string(stage) + " layer " + std::to_string(index);
}

// Walks layers from an input shape, reporting the first incompatible layer.
// Calls on_param(index, shapes) for each layer that owns weights.
template <class OnParam>
Shape infer(const std::vector<LayerSpec>& layers, Shape in, const std::string& stream, std::string_view stage,
            OnParam&& on_param) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        auto fail = [&](const std::string& why) {
            throw SpecError(layer_where(stream, stage, i) + ": " + why + " (input " + shape_str(in) + ")");
        };
        switch (l.kind) {
            case LayerKind::conv: {
                if (in.size() != 3) fail("conv needs a [C,H,W] input");
                if (l.units <= 0 || l.kernel <= 0 || l.stride <= 0 || l.pad < 0) fail("bad conv sizes");
                const long h = static_cast<long>(in[1]) + 2 * l.pad - l.kernel;
                const long w = static_cast<long>(in[2]) + 2 * l.pad - l.kernel;
                if (h < 0 || w < 0) fail("kernel larger than padded input");
                on_param(i, ParamShape{{std::size_t(l.units), in[0], std::size_t(l.kernel), std::size_t(l.kernel)},
                                       {std::size_t(l.units)}});
                in = {std::size_t(l.units), std::size_t(h / l.stride + 1), std::size_t(w / l.stride + 1)};
                break;
            }
            case LayerKind::pool: {
                if (in.size() != 3) fail("pool needs a [C,H,W] input");
                if (l.kernel <= 0 || l.stride <= 0) fail("bad pool sizes");
                if (std::size_t(l.kernel) > in[1] || std::size_t(l.kernel) > in[2]) fail("pool window larger than input");
                in = {in[0], (in[1] - l.kernel) / l.stride + 1, (in[2] - l.kernel) / l.stride + 1};
                break;
            }
            case LayerKind::relu:
                break;
            case LayerKind::linear: {
                if (l.units <= 0) fail("linear width must be positive");
                const std::size_t n = shape_numel(in);
                on_param(i, ParamShape{{std::size_t(l.units), n}, {std::size_t(l.units)}});
                in = {std::size_t(l.units)};
                break;
            }
        }
    }
    return in;
}

struct NoParams {
    void operator()(std::size_t, const ParamShape&) const {}
};

Shape stream_input_shape(const StreamSpec& s) {
    return {std::size_t(s.channels()), std::size_t(s.size), std::size_t(s.size)};
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Uniform [-bound, bound] values from a generator keyed by (seed, name). The raw
// 64-bit engine output is mapped by hand so results do not depend on the
// standard library's distribution implementation.
Tensor init_uniform(const Shape& shape, double bound, std::uint64_t seed, const std::string& name) {
    const std::uint64_t h = fnv1a(name);
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(h), std::uint32_t(h >> 32)};
    std::mt19937_64 rng(seq);
    Tensor t(shape);
    for (double& v : t.data()) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = (2.0 * u - 1.0) * bound;
    }
    return t;
}

}  // namespace

void validate_spec(const NetworkSpec& spec) {
    if (spec.embedding_dim <= 0) throw SpecError("embedding dimension must be positive");
    std::vector<InputKind> want;
    if (spec.architecture != Architecture::temporal) want.push_back(InputKind::image);
    if (spec.architecture != Architecture::spatial) want.push_back(InputKind::flowstack);
    if (spec.streams.size() != want.size()) {
        throw SpecError(std::string(to_string(spec.architecture)) + " network needs " + std::to_string(want.size()) +
                        " stream(s), got " + std::to_string(spec.streams.size()));
    }
    std::size_t fused_width = 0;
    for (std::size_t k = 0; k < want.size(); ++k) {
        const StreamSpec& s = spec.streams[k];
        if (s.name.empty() || s.name == "fusion") throw SpecError("stream " + std::to_string(k) + " has a reserved or empty name");
        if (k > 0 && s.name == spec.streams[0].name) throw SpecError("duplicate stream name " + s.name);
        if (s.input != want[k]) {
            throw SpecError("stream " + s.name + " must take " + std::string(to_string(want[k])) + " input");
        }
        if (s.size <= 0) throw SpecError("stream " + s.name + " has a non-positive input size");
        if (s.late.empty()) throw SpecError("stream " + s.name + " has no late layers");
        const Shape mid = infer(s.early, stream_input_shape(s), s.name, "early", NoParams{});
        const Shape out = infer(s.late, mid, s.name, "late", NoParams{});
        if (out.size() != 1) throw SpecError(layer_where(s.name, "late", s.late.size() - 1) + ": stream output is not a vector");
        if (spec.architecture != Architecture::two_stream && out[0] != std::size_t(spec.embedding_dim)) {
            throw SpecError(layer_where(s.name, "late", s.late.size() - 1) + ": output width " + std::to_string(out[0]) +
                            " differs from the embedding dimension " + std::to_string(spec.embedding_dim));
        }
        fused_width += out[0];
    }
    if (spec.architecture == Architecture::two_stream) {
        if (spec.fusion.empty()) throw SpecError("two-stream network needs fusion layers");
        const Shape out = infer(spec.fusion, Shape{fused_width}, "fusion", "fusion", NoParams{});
        if (out.size() != 1 || out[0] != std::size_t(spec.embedding_dim)) {
            throw SpecError(layer_where("fusion", "fusion", spec.fusion.size() - 1) + ": output " + shape_str(out) +
                            " differs from the embedding dimension " + std::to_string(spec.embedding_dim));
        }
        for (std::size_t i = 0; i < spec.fusion.size(); ++i) {
            if (spec.fusion[i].kind == LayerKind::conv || spec.fusion[i].kind == LayerKind::pool)
                throw SpecError(layer_where("fusion", "fusion", i) + ": fusion layers must be linear or relu");
        }
    } else if (!spec.fusion.empty()) {
        throw SpecError("fusion layers are only valid for two-stream networks");
    }
}

namespace {

// Every weighted layer of the spec as (stage, name prefix, index, shapes).
template <class Fn>
void for_each_weighted(const NetworkSpec& spec, Fn&& fn) {
    std::size_t fused_width = 0;
    for (const StreamSpec& s : spec.streams) {
        const std::string early = s.name + ".early", late = s.name + ".late";
        const Shape mid = infer(s.early, stream_input_shape(s), s.name, "early",
                                [&](std::size_t i, const ParamShape& ps) { fn("early", early, i, ps); });
        const Shape out = infer(s.late, mid, s.name, "late",
                                [&](std::size_t i, const ParamShape& ps) { fn("late", late, i, ps); });
        fused_width += shape_numel(out);
    }
    if (!spec.fusion.empty()) {
        infer(spec.fusion, Shape{fused_width}, "fusion", "fusion",
              [&](std::size_t i, const ParamShape& ps) { fn("fusion", std::string("fusion"), i, ps); });
    }
}

std::string weight_name(const std::string& prefix, std::size_t i) { return prefix + "." + std::to_string(i) + ".weight"; }
std::string bias_name(const std::string& prefix, std::size_t i) { return prefix + "." + std::to_string(i) + ".bias"; }

}  // namespace

ParameterCounts count_parameters(const NetworkSpec& spec) {
    validate_spec(spec);
    ParameterCounts c;
    for_each_weighted(spec, [&](std::string_view stage, const std::string&, std::size_t, const ParamShape& ps) {
        const std::size_t n = shape_numel(ps.weight) + shape_numel(ps.bias);
        (stage == "early" ? c.early : c.late) += n;
    });
    return c;
}

std::string_view to_string(Architecture a) {
    switch (a) {
        case Architecture::spatial: return "spatial";
        case Architecture::temporal: return "temporal";
        case Architecture::two_stream: return "two-stream";
    }
    return "?";
}

std::string_view to_string(SharingPolicy s) {
    switch (s) {
        case SharingPolicy::full: return "full";
        case SharingPolicy::semi: return "semi";
        case SharingPolicy::none: return "none";
    }
    return "?";
}

std::string_view to_string(Group g) {
    switch (g) {
        case Group::ego: return "ego";
        case Group::exo: return "exo";
        case Group::shared: return "shared";
    }
    return "?";
}

std::string_view to_string(InputKind k) { return k == InputKind::image ? "image" : "flowstack"; }

Architecture parse_architecture(std::string_view s) {
    if (s == "spatial") return Architecture::spatial;
    if (s == "temporal") return Architecture::temporal;
    if (s == "two-stream") return Architecture::two_stream;
    throw SpecError("unknown architecture '" + std::string(s) + "'");
}

SharingPolicy parse_sharing(std::string_view s) {
    if (s == "full") return SharingPolicy::full;
    if (s == "semi") return SharingPolicy::semi;
    if (s == "none") return SharingPolicy::none;
    throw SpecError("unknown sharing policy '" + std::string(s) + "'");
}

Group parse_group(std::string_view s) {
    if (s == "ego") return Group::ego;
    if (s == "exo") return Group::exo;
    if (s == "shared") return Group::shared;
    throw SpecError("unknown parameter group '" + std::string(s) + "'");
}

// ---- ParameterStore

Parameter& ParameterStore::add(Group group, std::string name, Tensor value) {
    if (find(group, name)) throw SpecError("duplicate parameter " + std::string(to_string(group)) + "/" + name);
    slots_.push_back(Slot{group, Parameter(std::move(name), std::move(value))});
    return slots_.back().param;
}

Parameter* ParameterStore::find(Group group, std::string_view name) {
    for (Slot& s : slots_)
        if (s.group == group && s.param.name == name) return &s.param;
    return nullptr;
}

const Parameter* ParameterStore::find(Group group, std::string_view name) const {
    return const_cast<ParameterStore*>(this)->find(group, name);
}

std::vector<ParameterStore::Entry> ParameterStore::entries() const {
    std::vector<Entry> out;
    out.reserve(slots_.size());
    for (const Slot& s : slots_) out.push_back({s.group, const_cast<Parameter*>(&s.param)});
    return out;
}

std::vector<Parameter*> ParameterStore::all() const {
    std::vector<Parameter*> out;
    for (const Entry& e : entries()) out.push_back(e.param);
    return out;
}

std::size_t ParameterStore::count() const {
    std::size_t n = 0;
    for (const Slot& s : slots_) n += s.param.value.size();
    return n;
}

std::size_t ParameterStore::count(Group group) const {
    std::size_t n = 0;
    for (const Slot& s : slots_)
        if (s.group == group) n += s.param.value.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (Slot& s : slots_) s.param.zero_grad();
}

// ---- EmbeddingNet

EmbeddingNet::EmbeddingNet(NetworkSpec spec) : spec_(std::move(spec)) { validate_spec(spec_); }

Group EmbeddingNet::group_for(Branch branch, std::string_view stage) const {
    const Group own = branch == Branch::ego ? Group::ego : Group::exo;
    if (stage == "early") return spec_.sharing == SharingPolicy::full ? Group::shared : own;
    return spec_.sharing == SharingPolicy::none ? own : Group::shared;
}

EmbeddingNet EmbeddingNet::build(NetworkSpec spec, std::uint64_t seed) {
    EmbeddingNet net(std::move(spec));
    for (Branch b : {Branch::ego, Branch::exo}) {
        for_each_weighted(net.spec_, [&](std::string_view stage, const std::string& prefix, std::size_t i,
                                         const ParamShape& ps) {
            const Group g = net.group_for(b, stage);
            const std::string wn = weight_name(prefix, i), bn = bias_name(prefix, i);
            if (net.store_.find(g, wn)) return;
            const double bound = 1.0 / std::sqrt(static_cast<double>(shape_numel(ps.weight) / ps.weight[0]));
            net.store_.add(g, wn, init_uniform(ps.weight, bound, seed, wn));
            net.store_.add(g, bn, init_uniform(ps.bias, bound, seed, bn));
        });
    }
    return net;
}

EmbeddingNet::EmbeddingNet(NetworkSpec spec, ParameterStore store) : EmbeddingNet(std::move(spec)) {
    std::size_t expected = 0;
    for (Branch b : {Branch::ego, Branch::exo}) {
        for_each_weighted(spec_, [&](std::string_view stage, const std::string& prefix, std::size_t i,
                                     const ParamShape& ps) {
            const Group g = group_for(b, stage);
            // shared layers are visited once per branch but stored once
            if (b == Branch::exo && g == Group::shared) return;
            for (auto [name, shape] : {std::pair{weight_name(prefix, i), ps.weight}, std::pair{bias_name(prefix, i), ps.bias}}) {
                const Parameter* p = store.find(g, name);
                if (!p) throw SpecError("missing parameter " + std::string(to_string(g)) + "/" + name);
                if (p->value.shape() != shape) {
                    throw SpecError("parameter " + std::string(to_string(g)) + "/" + name + " has shape " +
                                    shape_str(p->value.shape()) + ", spec needs " + shape_str(shape));
                }
                ++expected;
            }
        });
    }
    if (store.entries().size() != expected) {
        throw SpecError("parameter store holds " + std::to_string(store.entries().size()) +
                        " tensors, spec needs " + std::to_string(expected));
    }
    store_ = std::move(store);
}

Parameter& EmbeddingNet::resolve(Branch branch, std::string_view stage, const std::string& name) {
    const Group g = group_for(branch, stage);
    Parameter* p = store_.find(g, name);
    if (!p) throw SpecError("no parameter " + std::string(to_string(g)) + "/" + name);
    return *p;
}

Var EmbeddingNet::run_layers(Graph& g, Branch branch, const std::string& prefix, std::string_view stage,
                             const std::vector<LayerSpec>& layers, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::conv:
                x = conv2d(x, g.parameter(resolve(branch, stage, weight_name(prefix, i))),
                           g.parameter(resolve(branch, stage, bias_name(prefix, i))), l.stride, l.pad);
                break;
            case LayerKind::pool:
                x = maxpool2d(x, l.kernel, l.stride);
                break;
            case LayerKind::relu:
                x = relu(x);
                break;
            case LayerKind::linear:
                if (x.shape().size() != 1) x = flatten(x);
                x = linear(x, g.parameter(resolve(branch, stage, weight_name(prefix, i))),
                           g.parameter(resolve(branch, stage, bias_name(prefix, i))));
                break;
        }
    }
    return x;
}

Var EmbeddingNet::run_stream(Graph& g, Branch branch, const StreamSpec& stream, const Tensor& input) {
    const Shape want = stream_input_shape(stream);
    if (input.shape() != want) {
        throw ShapeError(stream.name + " input must be " + shape_str(want) + ", got " + shape_str(input.shape()));
    }
    Var x = g.constant(input);
    x = run_layers(g, branch, stream.name + ".early", "early", stream.early, x);
    return run_layers(g, branch, stream.name + ".late", "late", stream.late, x);
}

Var EmbeddingNet::forward(Graph& graph, Branch branch, const NetInput& input) {
    std::vector<Var> outs;
    for (const StreamSpec& s : spec_.streams) {
        const std::optional<Tensor>& t = s.input == InputKind::image ? input.image : input.flow;
        if (!t) throw ShapeError("missing " + std::string(to_string(s.input)) + " input for the " + s.name + " stream");
        outs.push_back(run_stream(graph, branch, s, *t));
    }
    if (spec_.architecture != Architecture::two_stream) return outs.front();
    return run_layers(graph, branch, "fusion", "fusion", spec_.fusion, concat(outs[0], outs[1]));
}

Tensor EmbeddingNet::embed(Branch branch, const NetInput& input) const {
    Graph g;
    // inference never runs backward, so parameters are only read
    return const_cast<EmbeddingNet*>(this)->forward(g, branch, input).value();
}

Tensor EmbeddingNet::embed_ego(const NetInput& input) const { return embed(Branch::ego, input); }
Tensor EmbeddingNet::embed_exo(const NetInput& input) const { return embed(Branch::exo, input); }

// ---- matching

double match_score(const Tensor& ego, const Tensor& cand) {
    if (ego.shape() != cand.shape()) {
        throw ShapeError("match_score: " + shape_str(ego.shape()) + " vs " + shape_str(cand.shape()));
    }
    Graph g;
    return -l2_sq(g.constant(ego), g.constant(cand)).value().item();
}

int match(const MatchQuery& query) {
    if (query.candidates.empty()) throw std::invalid_argument("match needs at least one candidate");
    int best = query.candidates.begin()->first;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& [id, emb] : query.candidates) {
        const double s = match_score(query.ego, emb);
        if (s > best_score) {
            best_score = s;
            best = id;
        }
    }
    return best;
}

}  // namespace egomatch
