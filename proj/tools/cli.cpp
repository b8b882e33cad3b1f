#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>

#include "egomatch/checkpoint.hpp"
#include "egomatch/eval.hpp"
#include "egomatch/gradcheck_suite.hpp"
#include "egomatch/synthworld.hpp"
#include "egomatch/trainer.hpp"

namespace egomatch::cli {

namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f || !f.write(text.data(), static_cast<std::streamsize>(text.size())))
        throw DataError("cannot write " + path.string());
}

void write_report(const EvalReport& r, const std::string& report, const std::string& pr, const std::string& scores,
                  std::ostream& out) {
    if (!report.empty()) write_text(report, r.to_json());
    if (!pr.empty()) write_text(pr, pr_csv(r.pr));
    if (!scores.empty()) write_text(scores, scores_csv(r.pairs));
    out << "ap " << r.ap << " (random " << r.baseline_ap << ")  multi_accuracy " << r.multi_accuracy << " (chance "
        << r.chance_multi_accuracy << ")  frames " << r.frames << "\n";
}

FrameRange split_of(const Dataset& data, const std::string& split) { return split == "train" ? data.train : data.test; }

const std::vector<std::string> kArchitectures{"spatial", "temporal", "two-stream"};
const std::vector<std::string> kSharing{"full", "semi", "none"};
const std::vector<std::string> kLosses{"contrastive", "triplet"};
const std::vector<std::string> kSplits{"train", "test"};

struct Options {
    // synth
    WorldConfig world;
    std::string out;
    // train
    std::string data, arch = "two-stream", share = "semi", loss = "triplet", neg = "all", trace, exo = "exo";
    TrainConfig train;
    // eval / match / baseline / temporal
    std::string model, report, pr, scores, split = "test", ego, method, observer;
    int frame = 0;
    BaselineConfig baseline;
};

void add_report_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--report", o.report, "Write the report as JSON");
    cmd->add_option("--pr", o.pr, "Write precision-recall points as CSV (recall,precision)");
    cmd->add_option("--scores", o.scores, "Write per-pair scores as CSV (frame,camera,person,score,label)");
}

int cmd_synth(const Options& o, std::ostream& out) {
    const Dataset data = generate(o.world);
    export_dataset(data, o.out);
    out << "wrote " << data.frames << " frames, " << data.cameras.size() << " cameras, " << data.annotations.size()
        << " boxes to " << o.out << "\n";
    return kOk;
}

int cmd_train(Options o, std::ostream& out) {
    const Dataset data = load_dataset(o.data);
    TrainConfig& cfg = o.train;
    cfg.arch = parse_architecture(o.arch);
    cfg.sharing = parse_sharing(o.share);
    cfg.loss = parse_loss(o.loss);
    cfg.negatives = parse_negative_sampling(o.neg);
    cfg.exo_camera = o.exo;
    const TrainResult r = train(data, cfg);
    save_checkpoint(o.out, r.net, train_meta(cfg));
    if (!o.trace.empty()) write_text(o.trace, trace_csv(r.losses));
    out << "trained " << cfg.iterations << " iterations on " << r.exemplars << " exemplars; loss " << r.losses.front()
        << " -> " << r.losses.back() << "\n";
    return kOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
    const Dataset data = load_dataset(o.data);
    const Checkpoint ck = load_checkpoint(o.model);
    write_report(evaluate(data, ck.net, split_of(data, o.split), o.exo), o.report, o.pr, o.scores, out);
    return kOk;
}

int cmd_match(const Options& o, std::ostream& out, std::ostream& err) {
    const Dataset data = load_dataset(o.data);
    const Checkpoint ck = load_checkpoint(o.model);
    const CameraInfo& cam = data.camera(o.ego);
    if (cam.kind != CameraKind::ego || cam.id == o.exo) throw DataError("'" + o.ego + "' is not a wearable camera");
    if (o.frame < 0 || o.frame >= data.frames) {
        throw DataError("frame " + std::to_string(o.frame) + " outside [0, " + std::to_string(data.frames) + ")");
    }
    const bool temporal = uses_flow(ck.net.spec());
    if (temporal && o.frame < kTemporalHistory) {
        throw DataError("frame " + std::to_string(o.frame) + " needs " + std::to_string(kTemporalHistory) +
                        " earlier frames of flow");
    }
    const FrameRange range{temporal ? o.frame - kTemporalHistory : o.frame, o.frame + 1};
    const auto samples = frame_samples(data, range, o.exo, temporal);
    auto it = std::find_if(samples.begin(), samples.end(),
                           [&](const FrameSample& s) { return s.frame == o.frame && s.ego_camera == o.ego; });
    if (it == samples.end()) throw DataError("no sample for " + o.ego + " at frame " + std::to_string(o.frame));
    if (it->boxes.empty()) {
        err << "no visible people in " << o.exo << " at frame " << o.frame << "\n";
        return kDataError;
    }
    const InputBuilder inputs(data, ck.net.spec());
    MatchQuery q{ck.net.embed_ego(inputs.ego(*it)), {}};
    for (const Annotation& a : it->boxes) q.candidates.emplace(a.person, ck.net.embed_exo(inputs.exo(*it, a.person)));
    out << match(q) << "\n";
    return kOk;
}

int cmd_baseline(Options o, std::ostream& out) {
    const Dataset data = load_dataset(o.data);
    o.baseline.exo_camera = o.exo;
    o.baseline.loss = parse_loss(o.loss);
    const Baseline b = Baseline::fit(data, parse_baseline(o.method), o.baseline);
    write_report(evaluate_baseline(data, b, split_of(data, o.split), o.exo), o.report, o.pr, o.scores, out);
    return kOk;
}

int cmd_gradcheck(std::ostream& out) {
    const GradCheckReport r = run_gradcheck_suite();
    for (const GradCheckEntry& e : r.entries)
        out << std::left << std::setw(22) << e.op << " " << e.instances << " instances  max rel error " << e.max_error << "\n";
    out << "max relative error " << r.max_error() << "\n";
    return r.max_error() <= 1e-5 ? kOk : kDataError;
}

int cmd_temporal(const Options& o, std::ostream& out) {
    const Dataset data = load_dataset(o.data);
    const Checkpoint ck = load_checkpoint(o.model);
    write_report(temporal_only_eval(data, ck.net, o.observer), o.report, o.pr, o.scores, out);
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Match wearable-camera videos to the people seen by a static camera", "egomatch"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--seed", o.world.seed, "Random seed")->capture_default_str();
    synth->add_option("--agents", o.world.agents, "Number of people")->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--wearers", o.world.wearers, "People wearing a camera")->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--frames", o.world.frames, "Video length")->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_flag("--distinct-motion", o.world.distinct_motion, "Give each person their own speed and pause habits");
    synth->add_option("--out", o.out, "Output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "Train an embedding network");
    train_cmd->add_option("--data", o.data, "Dataset directory")->required();
    train_cmd->add_option("--arch", o.arch, "Architecture")->capture_default_str()->check(CLI::IsMember(kArchitectures));
    train_cmd->add_option("--share", o.share, "Parameter sharing between branches")->capture_default_str()->check(CLI::IsMember(kSharing));
    train_cmd->add_option("--loss", o.loss, "Training loss")->capture_default_str()->check(CLI::IsMember(kLosses));
    train_cmd->add_option("--margin", o.train.margin, "Loss margin")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", o.train.lr, "Learning rate")->capture_default_str()->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--momentum", o.train.momentum, "Momentum")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--wd", o.train.weight_decay, "Weight decay")->capture_default_str()->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--iters", o.train.iterations, "Iterations")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", o.train.batch, "Minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", o.train.seed, "Seed for initialization and shuffling")->capture_default_str();
    train_cmd->add_option("--dim", o.train.embedding_dim, "Embedding dimension")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--neg-sample", o.neg, "Negatives per frame: all, or one drawn at random each epoch")
        ->capture_default_str()
        ->check(CLI::IsMember({"all", "random"}));
    train_cmd->add_option("--exo", o.exo, "Camera supplying the candidate people")->capture_default_str();
    train_cmd->add_option("--out", o.out, "Checkpoint to write")->required();
    train_cmd->add_option("--trace", o.trace, "Write the loss trace as CSV (iteration,loss)");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--data", o.data, "Dataset directory")->required();
    eval_cmd->add_option("--model", o.model, "Checkpoint")->required();
    eval_cmd->add_option("--split", o.split, "Frames to evaluate")->capture_default_str()->check(CLI::IsMember(kSplits));
    eval_cmd->add_option("--exo", o.exo, "Camera supplying the candidate people")->capture_default_str();
    add_report_flags(eval_cmd, o);

    auto* match_cmd = app.add_subcommand("match", "Print the person wearing a camera at one frame");
    match_cmd->add_option("--data", o.data, "Dataset directory")->required();
    match_cmd->add_option("--model", o.model, "Checkpoint")->required();
    match_cmd->add_option("--frame", o.frame, "Frame index")->required();
    match_cmd->add_option("--ego", o.ego, "Wearable camera id")->required();
    match_cmd->add_option("--exo", o.exo, "Camera supplying the candidate people")->capture_default_str();

    auto* base_cmd = app.add_subcommand("baseline", "Fit and evaluate a hand-crafted baseline");
    base_cmd->add_option("--data", o.data, "Dataset directory")->required();
    base_cmd->add_option("--method", o.method, "Baseline")
        ->required()
        ->check(CLI::IsMember({"flowmag", "hoof", "odom-hoof", "vel-mag", "hoof-embed", "mag-embed"}));
    base_cmd->add_option("--split", o.split, "Frames to evaluate")->capture_default_str()->check(CLI::IsMember(kSplits));
    base_cmd->add_option("--exo", o.exo, "Camera supplying the candidate people")->capture_default_str();
    base_cmd->add_option("--loss", o.loss, "Loss of the embedding baselines")->capture_default_str()->check(CLI::IsMember(kLosses));
    base_cmd->add_option("--iters", o.baseline.iterations, "Iterations of the embedding baselines")->capture_default_str()->check(CLI::PositiveNumber);
    base_cmd->add_option("--lr", o.baseline.lr, "Learning rate of the embedding baselines")->capture_default_str()->check(CLI::NonNegativeNumber);
    base_cmd->add_option("--seed", o.baseline.seed, "Seed of the embedding baselines")->capture_default_str();
    add_report_flags(base_cmd, o);

    app.add_subcommand("gradcheck", "Check every gradient against finite differences");

    auto* temporal_cmd = app.add_subcommand("temporal-match", "Match using another wearer's camera as the observer");
    temporal_cmd->add_option("--data", o.data, "Dataset directory")->required();
    temporal_cmd->add_option("--observer", o.observer, "Wearable camera playing the static camera's role")->required();
    temporal_cmd->add_option("--model", o.model, "Temporal checkpoint")->required();
    add_report_flags(temporal_cmd, o);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());  // CLI11 consumes from the back
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(o, out);
        if (train_cmd->parsed()) return cmd_train(o, out);
        if (eval_cmd->parsed()) return cmd_eval(o, out);
        if (match_cmd->parsed()) return cmd_match(o, out, err);
        if (base_cmd->parsed()) return cmd_baseline(o, out);
        if (temporal_cmd->parsed()) return cmd_temporal(o, out);
        return cmd_gradcheck(out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    }
}

}  // namespace egomatch::cli
