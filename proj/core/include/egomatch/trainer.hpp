#ifndef EGOMATCH_TRAINER_HPP
#define EGOMATCH_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egomatch/checkpoint.hpp"
#include "egomatch/dataset.hpp"
#include "egomatch/networks.hpp"
#include "egomatch/optim.hpp"

namespace egomatch {

enum class LossKind { contrastive, triplet };
enum class NegativeSampling { all, random };

std::string_view to_string(LossKind k);
LossKind parse_loss(std::string_view s);
std::string_view to_string(NegativeSampling n);
NegativeSampling parse_negative_sampling(std::string_view s);

struct TrainConfig {
    double lr = 1e-5;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int iterations = 2000;
    int batch = 16;
    double margin = 1.0;
    std::uint64_t seed = 1;
    LossKind loss = LossKind::triplet;
    Architecture arch = Architecture::two_stream;
    SharingPolicy sharing = SharingPolicy::semi;
    NegativeSampling negatives = NegativeSampling::all;
    int embedding_dim = kDefaultEmbeddingDim;
    /// Camera whose frames supply the candidate people. Any camera other than
    /// the exo one turns on the cross-view (observer) protocol.
    std::string exo_camera = "exo";

    void validate() const;
};

/// One ego camera at one time step, with the people visible to `exo_camera`.
struct FrameSample {
    int frame = 0;
    std::string ego_camera;
    std::string exo_camera;
    int wearer = -1;
    bool wearer_visible = false;
    std::vector<Annotation> boxes;  // visible boxes only, ordered by person id
};

/// Flow stacks cover frames t-4..t; earlier frames of a range are skipped for
/// temporal inputs.
inline constexpr int kTemporalHistory = kFlowStackDepth - 1;

/// True when any stream consumes flow stacks (and so needs frame history).
bool uses_flow(const NetworkSpec& spec);

/// Samples for every ego camera other than `exo_camera` and every frame of `range`.
std::vector<FrameSample> frame_samples(const Dataset& data, FrameRange range, const std::string& exo_camera,
                                       bool temporal);

struct PairSource {
    std::size_t sample = 0;
    int person = 0;
    int label = 0;
    friend bool operator==(const PairSource&, const PairSource&) = default;
};

struct TripletSource {
    std::size_t sample = 0;
    int positive = 0;
    int negative = 0;
    friend bool operator==(const TripletSource&, const TripletSource&) = default;
};

struct ExemplarTally {
    std::size_t frames = 0;
    std::size_t skipped_no_boxes = 0;
};

/// One positive (if the wearer is visible) and one negative per other person, per frame.
std::vector<PairSource> make_pairs(std::span<const FrameSample> samples, ExemplarTally* tally = nullptr);
/// One triplet per non-wearer for frames where the wearer and someone else are visible.
std::vector<TripletSource> make_triplets(std::span<const FrameSample> samples);

/// Network inputs use 8-bit units: pixel values become 255*v - 128 and flow
/// is multiplied by 255, so both streams see activations of similar size.
inline constexpr double kImageInputScale = 255.0;
inline constexpr double kImageInputOffset = 128.0;
inline constexpr double kFlowInputScale = 255.0;

/// Turns samples into network inputs: masked exo images, cropped exo flow
/// stacks, ego images and resized ego flow stacks.
class InputBuilder {
public:
    InputBuilder(const Dataset& data, const NetworkSpec& spec);

    NetInput ego(const FrameSample& s) const;
    NetInput exo(const FrameSample& s, int person) const;

private:
    const Dataset& data_;
    bool image_ = false;
    bool flow_ = false;
    int image_size_ = kSpatialInputSize;
    int flow_size_ = kFlowCropSize;
};

struct TrainResult {
    EmbeddingNet net;
    std::vector<double> losses;  // per iteration, summed over the batch
    double seconds = 0.0;
    std::size_t exemplars = 0;
    ExemplarTally tally;
};

/// Step-level access to the training loop.
class Trainer {
public:
    Trainer(const Dataset& data, TrainConfig cfg, std::optional<NetworkSpec> spec = std::nullopt);

    const TrainConfig& config() const { return cfg_; }
    EmbeddingNet& net() { return net_; }
    Sgd& optimizer() { return opt_; }
    std::size_t exemplar_count() const;
    const std::vector<FrameSample>& samples() const { return samples_; }
    const ExemplarTally& tally() const { return tally_; }

    /// Exemplar ids of the next minibatch; epochs are reshuffled by (seed, epoch).
    std::vector<std::size_t> next_batch();
    /// Zeroes gradients and accumulates the batch loss gradient; returns the loss.
    double accumulate(std::span<const std::size_t> batch);
    /// One SGD iteration; returns its batch loss.
    double step();

private:
    std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;
    double exemplar_loss(std::size_t id);

    const Dataset& data_;
    TrainConfig cfg_;
    EmbeddingNet net_;
    Sgd opt_;
    InputBuilder inputs_;
    std::vector<FrameSample> samples_;
    std::vector<PairSource> pairs_;
    std::vector<TripletSource> triplets_;
    // pools used when negatives are sampled: exemplar ids grouped by frame sample
    std::vector<std::vector<std::size_t>> groups_;
    ExemplarTally tally_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::uint64_t epoch_ = 0;
};

/// Runs cfg.iterations steps from a freshly seeded network. Throws DataError
/// when the training split yields no exemplars.
TrainResult train(const Dataset& data, const TrainConfig& cfg, std::optional<NetworkSpec> spec = std::nullopt);

/// "iteration,loss" rows, one per iteration, iterations counted from 1.
std::string trace_csv(std::span<const double> losses);

/// Metadata stored in checkpoints written by the trainer.
CheckpointMeta train_meta(const TrainConfig& cfg);

}  // namespace egomatch

#endif  // EGOMATCH_TRAINER_HPP
