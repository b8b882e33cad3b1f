#ifndef EGOMATCH_NETWORKS_HPP
#define EGOMATCH_NETWORKS_HPP

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "egomatch/autograd.hpp"

namespace egomatch {

/// A network description that cannot be wired (bad layer sizes, unknown names).
class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class LayerKind { conv, pool, relu, linear };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int units = 0;   // conv output channels or linear width
    int kernel = 0;  // conv kernel or pool window
    int stride = 1;
    int pad = 0;

    static LayerSpec conv(int channels, int kernel, int stride = 1, int pad = 0) {
        return {LayerKind::conv, channels, kernel, stride, pad};
    }
    static LayerSpec pool(int window, int stride) { return {LayerKind::pool, 0, window, stride, 0}; }
    static LayerSpec relu() { return {LayerKind::relu, 0, 0, 1, 0}; }
    static LayerSpec linear(int units) { return {LayerKind::linear, units, 0, 1, 0}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class InputKind { image, flowstack };
enum class Architecture { spatial, temporal, two_stream };
enum class SharingPolicy { full, semi, none };
enum class Branch { ego, exo };
/// theta_1 (ego-private), theta_2 (exo-private), theta (shared).
enum class Group { ego, exo, shared };

/// One input modality: early layers are branch-private under the semi policy,
/// late layers are shared.
struct StreamSpec {
    std::string name;
    InputKind input = InputKind::image;
    int size = 64;
    std::vector<LayerSpec> early;
    std::vector<LayerSpec> late;

    int channels() const { return input == InputKind::image ? 3 : 10; }
    friend bool operator==(const StreamSpec&, const StreamSpec&) = default;
};

struct NetworkSpec {
    Architecture architecture = Architecture::spatial;
    SharingPolicy sharing = SharingPolicy::semi;
    int embedding_dim = 128;
    std::vector<StreamSpec> streams;
    /// Applied to the concatenated stream embeddings (two-stream only).
    std::vector<LayerSpec> fusion;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

inline constexpr int kDefaultEmbeddingDim = 128;
inline constexpr int kSpatialInputSize = 64;
inline constexpr int kFlowCropSize = 32;
inline constexpr int kFusionWidth = 128;

/// Desk-scale defaults: 4 private conv layers (8,16,16,32 channels, 3x3, pad 1,
/// relu each, 2x2 pool after layers 1, 2 and 4), then 2 shared conv layers
/// (32,32) and 2 linear layers to D. Image input 3x64x64, flow input 10x32x32.
/// Two-stream adds a D*2 -> 128 -> relu -> D fusion head.
NetworkSpec default_spec(Architecture arch, SharingPolicy sharing, int embedding_dim = kDefaultEmbeddingDim);

/// Throws SpecError naming the stream, stage and layer index of the first
/// layer whose input shape it cannot accept.
void validate_spec(const NetworkSpec& spec);

std::string_view to_string(Architecture a);
std::string_view to_string(SharingPolicy s);
std::string_view to_string(Group g);
std::string_view to_string(InputKind k);
Architecture parse_architecture(std::string_view s);
SharingPolicy parse_sharing(std::string_view s);
Group parse_group(std::string_view s);

/// Named parameter groups. Parameters have stable addresses; a shared
/// parameter is a single object used by both branches.
class ParameterStore {
public:
    Parameter& add(Group group, std::string name, Tensor value);
    Parameter* find(Group group, std::string_view name);
    const Parameter* find(Group group, std::string_view name) const;

    struct Entry {
        Group group;
        Parameter* param;
    };
    /// All parameters in creation order.
    std::vector<Entry> entries() const;
    std::vector<Parameter*> all() const;

    /// Number of scalar parameters, in total or in one group.
    std::size_t count() const;
    std::size_t count(Group group) const;

    void zero_grad();

private:
    struct Slot {
        Group group;
        Parameter param;
    };
    std::deque<Slot> slots_;
};

/// Network input for one branch; which tensors are required depends on the architecture.
struct NetInput {
    std::optional<Tensor> image;  // [3,S,S]
    std::optional<Tensor> flow;   // [10,S,S]
};

/// Two-branch embedding network with a configurable sharing policy.
class EmbeddingNet {
public:
    /// Validates the spec and initialises every parameter uniformly in
    /// [-1/sqrt(fan_in), 1/sqrt(fan_in)] from a generator keyed by (seed, layer name),
    /// so branch copies of a layer start equal.
    static EmbeddingNet build(NetworkSpec spec, std::uint64_t seed);

    /// Adopts existing parameters, checking that they match the spec exactly.
    EmbeddingNet(NetworkSpec spec, ParameterStore store);

    const NetworkSpec& spec() const { return spec_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }

    /// Records the branch's forward pass in `graph` and returns the D-dim embedding.
    Var forward(Graph& graph, Branch branch, const NetInput& input);

    Tensor embed_ego(const NetInput& input) const;
    Tensor embed_exo(const NetInput& input) const;
    Tensor embed(Branch branch, const NetInput& input) const;

    /// Parameter holding `name` (e.g. "spatial.early.0.weight") as seen by a branch.
    Parameter& resolve(Branch branch, std::string_view stage, const std::string& name);

    /// Which group a stage's parameters live in for a branch under this policy.
    Group group_for(Branch branch, std::string_view stage) const;

private:
    EmbeddingNet(NetworkSpec spec);
    Var run_stream(Graph& g, Branch branch, const StreamSpec& stream, const Tensor& input);
    Var run_layers(Graph& g, Branch branch, const std::string& prefix, std::string_view stage,
                   const std::vector<LayerSpec>& layers, Var x);

    NetworkSpec spec_;
    ParameterStore store_;
};

/// Parameters the spec implies for one copy of the early layers and for one
/// copy of everything else (late stacks plus fusion).
struct ParameterCounts {
    std::size_t early = 0;
    std::size_t late = 0;
};
ParameterCounts count_parameters(const NetworkSpec& spec);

/// Ego embedding plus candidate embeddings keyed by person id.
struct MatchQuery {
    Tensor ego;
    std::map<int, Tensor> candidates;
};

/// argmin over candidates of |ego - candidate|^2; ties go to the smallest id.
int match(const MatchQuery& query);

/// -|ego - cand|^2, higher means more likely the same person.
double match_score(const Tensor& ego, const Tensor& cand);

}  // namespace egomatch

#endif  // EGOMATCH_NETWORKS_HPP
