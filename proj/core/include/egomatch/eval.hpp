#ifndef EGOMATCH_EVAL_HPP
#define EGOMATCH_EVAL_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "egomatch/dataset.hpp"
#include "egomatch/networks.hpp"
#include "egomatch/trainer.hpp"

namespace egomatch {

struct ScoredPair {
    int frame = 0;
    std::string camera;  // ego camera
    int person = 0;
    double score = 0.0;  // higher means a more likely match
    int label = 0;
};

struct PrPoint {
    double recall = 0.0;
    double precision = 0.0;
    friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

/// Score-descending order; ties broken by (frame, camera, person).
std::vector<ScoredPair> rank_pairs(std::span<const ScoredPair> pairs);

/// One point per distinct score threshold. Throws std::invalid_argument
/// without positives.
std::vector<PrPoint> pr_curve(std::span<const ScoredPair> pairs);
/// Non-interpolated: mean over positives of the precision at their rank.
double average_precision(std::span<const ScoredPair> pairs);

/// Multi-class decision for one ego camera at one frame with the wearer in view.
struct FrameDecision {
    int frame = 0;
    std::string camera;
    int wearer = 0;
    int predicted = 0;
    std::size_t candidates = 0;
    bool correct() const { return predicted == wearer; }
};

double multiclass_accuracy(std::span<const FrameDecision> decisions);
/// Expected accuracy of a uniform guess, mean of 1/candidates.
double chance_accuracy(std::span<const FrameDecision> decisions);

struct EvalReport {
    std::vector<PrPoint> pr;
    double ap = 0.0;
    double multi_accuracy = 0.0;
    double chance_multi_accuracy = 0.0;
    double baseline_ap = 0.0;  // AP of a random ranking in expectation, P/(P+N)
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t frames = 0;        // frame samples with at least one candidate
    std::size_t multi_frames = 0;  // of those, frames with the wearer in view
    std::vector<ScoredPair> pairs;
    std::vector<FrameDecision> decisions;

    std::string to_json() const;
};

std::string pr_csv(std::span<const PrPoint> points);
std::string scores_csv(std::span<const ScoredPair> pairs);

/// Scores every visible candidate of one sample; keys are person ids.
using SampleScorer = std::function<std::map<int, double>(const FrameSample&)>;

/// Runs both protocols over `samples`. The multi-class prediction is the
/// highest score, smallest person id on ties (same rule as match()).
EvalReport evaluate_samples(std::span<const FrameSample> samples, const SampleScorer& scorer);

/// Embedding-distance evaluation of `net` on `range`, candidates taken from `exo_camera`.
EvalReport evaluate(const Dataset& data, const EmbeddingNet& net, FrameRange range,
                    const std::string& exo_camera = "exo");

/// Cross-view protocol: the observer's ego camera plays the exo role. Needs a
/// temporal network and boxes in the observer's view.
EvalReport temporal_only_eval(const Dataset& data, const EmbeddingNet& net, const std::string& observer);

// ---- regression and embedding baselines

struct LinearRegressor {
    std::vector<std::vector<double>> weights;  // [out][in]
    std::vector<double> bias;
    bool degenerate = false;  // Gram matrix singular without the ridge term

    std::vector<double> predict(std::span<const double> x) const;
};

inline constexpr double kRegressorRidge = 1e-8;

/// Least squares with a bias column via ridge-stabilized normal equations.
LinearRegressor fit_linear_regressor(const std::vector<std::vector<double>>& x,
                                     const std::vector<std::vector<double>>& y);

enum class BaselineMethod { flowmag, hoof, odom_hoof, vel_mag, hoof_embed, mag_embed };

std::string_view to_string(BaselineMethod m);
BaselineMethod parse_baseline(std::string_view s);

/// Training settings of the two fully connected embedding baselines.
struct BaselineConfig {
    LossKind loss = LossKind::triplet;
    double margin = 1.0;
    double lr = 1e-3;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int iterations = 2000;
    int batch = 16;
    std::uint64_t seed = 1;
    std::string exo_camera = "exo";
};

inline constexpr int kHoofWindow = 10;

/// Hand-crafted features for one sample: ego side and one exo person.
struct BaselineFeatures {
    std::vector<double> ego;
    std::vector<double> exo;
};
/// Features a method consumes. Windows never reach back before `range.begin`.
BaselineFeatures baseline_features(const Dataset& data, BaselineMethod method, const FrameSample& s, int person,
                                   FrameRange range);

/// A fitted baseline: maps ego and exo features to a match score.
class Baseline {
public:
    static Baseline fit(const Dataset& data, BaselineMethod method, const BaselineConfig& cfg = {});

    BaselineMethod method() const { return method_; }
    /// Regression: -|predict(ego) - exo|^2. Embedding: -|f(ego) - g(exo)|^2.
    double score(std::span<const double> ego, std::span<const double> exo) const;
    const LinearRegressor& regressor() const { return regressor_; }

private:
    BaselineMethod method_ = BaselineMethod::flowmag;
    LinearRegressor regressor_;
    ParameterStore heads_;
};

EvalReport evaluate_baseline(const Dataset& data, const Baseline& baseline, FrameRange range,
                             const std::string& exo_camera = "exo");

}  // namespace egomatch

#endif  // EGOMATCH_EVAL_HPP
