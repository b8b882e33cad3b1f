#include "egomatch/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <stdexcept>

#include "egomatch/losses.hpp"
#include "egomatch/random.hpp"

namespace egomatch {

std::string_view to_string(LossKind k) { return k == LossKind::triplet ? "triplet" : "contrastive"; }

LossKind parse_loss(std::string_view s) {
    if (s == "triplet") return LossKind::triplet;
    if (s == "contrastive") return LossKind::contrastive;
    throw std::invalid_argument("unknown loss '" + std::string(s) + "'");
}

std::string_view to_string(NegativeSampling n) { return n == NegativeSampling::all ? "all" : "random"; }

NegativeSampling parse_negative_sampling(std::string_view s) {
    if (s == "all") return NegativeSampling::all;
    if (s == "random") return NegativeSampling::random;
    throw std::invalid_argument("unknown negative sampling '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
    if (!(lr >= 0.0)) fail("learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0,1)");
    if (!(weight_decay >= 0.0)) fail("weight decay must be non-negative");
    if (iterations < 1) fail("iterations must be at least 1");
    if (batch < 1) fail("batch size must be at least 1");
    if (!(margin > 0.0)) fail("margin must be positive");
    if (embedding_dim < 1) fail("embedding dimension must be positive");
    if (exo_camera.empty()) fail("exo camera must be named");
}

bool uses_flow(const NetworkSpec& spec) {
    for (const StreamSpec& s : spec.streams)
        if (s.input == InputKind::flowstack) return true;
    return false;
}

std::vector<FrameSample> frame_samples(const Dataset& data, FrameRange range, const std::string& exo_camera,
                                       bool temporal) {
    data.camera(exo_camera);  // throws for unknown cameras
    std::vector<FrameSample> out;
    const int start = range.begin + (temporal ? kTemporalHistory : 0);
    for (int f = start; f < range.end; ++f) {
        std::vector<Annotation> boxes;
        for (const Annotation& a : data.boxes(f, exo_camera))
            if (a.visible) boxes.push_back(a);
        for (const CameraInfo* cam : data.ego_cameras()) {
            if (cam->id == exo_camera) continue;
            FrameSample s;
            s.frame = f;
            s.ego_camera = cam->id;
            s.exo_camera = exo_camera;
            s.wearer = cam->wearer;
            s.boxes = boxes;
            for (const Annotation& a : boxes) s.wearer_visible = s.wearer_visible || a.person == cam->wearer;
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<PairSource> make_pairs(std::span<const FrameSample> samples, ExemplarTally* tally) {
    std::vector<PairSource> out;
    ExemplarTally t;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ++t.frames;
        if (samples[i].boxes.empty()) {
            ++t.skipped_no_boxes;
            continue;
        }
        for (const Annotation& a : samples[i].boxes) out.push_back({i, a.person, a.person == samples[i].wearer ? 1 : 0});
    }
    if (tally) *tally = t;
    return out;
}

std::vector<TripletSource> make_triplets(std::span<const FrameSample> samples) {
    std::vector<TripletSource> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const FrameSample& s = samples[i];
        if (!s.wearer_visible) continue;
        for (const Annotation& a : s.boxes)
            if (a.person != s.wearer) out.push_back({i, s.wearer, a.person});
    }
    return out;
}

// ---- inputs

InputBuilder::InputBuilder(const Dataset& data, const NetworkSpec& spec) : data_(data) {
    for (const StreamSpec& s : spec.streams) {
        if (s.input == InputKind::image) {
            image_ = true;
            image_size_ = s.size;
        } else {
            flow_ = true;
            flow_size_ = s.size;
        }
    }
}

namespace {

Tensor image_input(const Image& image, int size) {
    Tensor t = image_tensor(resize_image(image, size, size));
    for (double& x : t.data()) x = kImageInputScale * x - kImageInputOffset;
    return t;
}

Tensor flow_input(std::span<const FlowField> stack) {
    Tensor t = stack_flows(stack);
    for (double& x : t.data()) x *= kFlowInputScale;
    return t;
}

void require_history(int frame) {
    if (frame < kTemporalHistory) {
        throw DataError("frame " + std::to_string(frame) + " has fewer than " + std::to_string(kFlowStackDepth) +
                        " flow fields behind it");
    }
}

}  // namespace

NetInput InputBuilder::ego(const FrameSample& s) const {
    NetInput in;
    if (image_) in.image = image_input(data_.images.at(s.ego_camera).at(s.frame), image_size_);
    if (flow_) {
        require_history(s.frame);
        std::vector<FlowField> stack;
        for (int k = s.frame - kTemporalHistory; k <= s.frame; ++k)
            stack.push_back(resize_flow(data_.flows.at(s.ego_camera).at(k), flow_size_, flow_size_));
        in.flow = flow_input(stack);
    }
    return in;
}

NetInput InputBuilder::exo(const FrameSample& s, int person) const {
    const auto box = data_.box(s.frame, s.exo_camera, person);
    if (!box) {
        throw DataError("no box for person " + std::to_string(person) + " in " + s.exo_camera + " frame " +
                        std::to_string(s.frame));
    }
    NetInput in;
    if (image_) {
        const Image masked = mask_person(data_.images.at(s.exo_camera).at(s.frame), box->box());
        in.image = image_input(masked, image_size_);
    }
    if (flow_) {
        require_history(s.frame);
        std::vector<FlowField> stack;
        for (int k = s.frame - kTemporalHistory; k <= s.frame; ++k) {
            // people who were out of view earlier keep their current box
            const auto bk = data_.box(k, s.exo_camera, person);
            stack.push_back(crop_flow(data_.flows.at(s.exo_camera).at(k), (bk ? *bk : *box).box(), flow_size_, flow_size_));
        }
        in.flow = flow_input(stack);
    }
    return in;
}

// ---- trainer

namespace {

NetworkSpec spec_for(const TrainConfig& cfg, const std::optional<NetworkSpec>& spec) {
    cfg.validate();
    return spec ? *spec : default_spec(cfg.arch, cfg.sharing, cfg.embedding_dim);
}

}  // namespace

Trainer::Trainer(const Dataset& data, TrainConfig cfg, std::optional<NetworkSpec> spec)
    : data_(data),
      cfg_(std::move(cfg)),
      net_(EmbeddingNet::build(spec_for(cfg_, spec), cfg_.seed)),
      opt_(net_.params().all(), SgdConfig{cfg_.lr, cfg_.momentum, cfg_.weight_decay}),
      inputs_(data, net_.spec()) {
    samples_ = frame_samples(data, data.train, cfg_.exo_camera, uses_flow(net_.spec()));
    if (cfg_.loss == LossKind::triplet) {
        tally_.frames = samples_.size();
        triplets_ = make_triplets(samples_);
    } else {
        pairs_ = make_pairs(samples_, &tally_);
    }
    if (exemplar_count() == 0) {
        throw DataError("training split yields no " + std::string(to_string(cfg_.loss)) + " exemplars");
    }
    groups_.assign(samples_.size(), {});
    for (std::size_t i = 0; i < exemplar_count(); ++i)
        groups_[cfg_.loss == LossKind::triplet ? triplets_[i].sample : pairs_[i].sample].push_back(i);
    order_ = epoch_order(0);
}

std::size_t Trainer::exemplar_count() const {
    return cfg_.loss == LossKind::triplet ? triplets_.size() : pairs_.size();
}

std::vector<std::size_t> Trainer::epoch_order(std::uint64_t epoch) const {
    if (cfg_.negatives == NegativeSampling::all) return shuffle_order(exemplar_count(), cfg_.seed, epoch);
    // one random negative per frame (plus its positive pair)
    Rng rng(cfg_.seed, epoch, 0x4e45u);
    std::vector<std::size_t> chosen;
    for (const auto& group : groups_) {
        if (group.empty()) continue;
        if (cfg_.loss == LossKind::triplet) {
            chosen.push_back(group[rng.index(group.size())]);
            continue;
        }
        std::vector<std::size_t> negatives;
        for (std::size_t id : group) (pairs_[id].label ? chosen : negatives).push_back(id);
        if (!negatives.empty()) chosen.push_back(negatives[rng.index(negatives.size())]);
    }
    rng.shuffle(chosen);
    return chosen;
}

std::vector<std::size_t> Trainer::next_batch() {
    std::vector<std::size_t> batch;
    while (static_cast<int>(batch.size()) < cfg_.batch) {
        if (cursor_ == order_.size()) {
            order_ = epoch_order(++epoch_);
            cursor_ = 0;
        }
        batch.push_back(order_[cursor_++]);
    }
    return batch;
}

double Trainer::exemplar_loss(std::size_t id) {
    Graph g;
    Var loss;
    if (cfg_.loss == LossKind::triplet) {
        const TripletSource& t = triplets_[id];
        const FrameSample& s = samples_[t.sample];
        const TripletVars v{net_.forward(g, Branch::ego, inputs_.ego(s)),
                            net_.forward(g, Branch::exo, inputs_.exo(s, t.positive)),
                            net_.forward(g, Branch::exo, inputs_.exo(s, t.negative))};
        loss = triplet_loss(std::span(&v, 1), cfg_.margin);
    } else {
        const PairSource& p = pairs_[id];
        const FrameSample& s = samples_[p.sample];
        const PairVars v{net_.forward(g, Branch::ego, inputs_.ego(s)), net_.forward(g, Branch::exo, inputs_.exo(s, p.person)),
                         p.label};
        loss = contrastive_loss(std::span(&v, 1), cfg_.margin);
    }
    g.backward(loss);
    return loss.value().item();
}

double Trainer::accumulate(std::span<const std::size_t> batch) {
    opt_.zero_grad();
    // the batch loss is a sum, so per-exemplar graphs accumulate the same
    // gradient; a fixed order makes the rounding independent of the shuffle
    std::vector<std::size_t> ids(batch.begin(), batch.end());
    std::sort(ids.begin(), ids.end());
    double total = 0.0;
    for (std::size_t id : ids) total += exemplar_loss(id);
    return total;
}

double Trainer::step() {
    const auto batch = next_batch();
    const double loss = accumulate(batch);
    opt_.step();
    return loss;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, std::optional<NetworkSpec> spec) {
    const auto t0 = std::chrono::steady_clock::now();
    Trainer trainer(data, cfg, std::move(spec));
    std::vector<double> losses;
    losses.reserve(cfg.iterations);
    for (int i = 0; i < cfg.iterations; ++i) losses.push_back(trainer.step());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return TrainResult{std::move(trainer.net()), std::move(losses), seconds, trainer.exemplar_count(), trainer.tally()};
}

std::string trace_csv(std::span<const double> losses) {
    std::string out = "iteration,loss\n";
    char buf[32];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        auto r = std::to_chars(buf, buf + sizeof buf, losses[i]);
        out += std::to_string(i + 1) + "," + std::string(buf, r.ptr) + "\n";
    }
    return out;
}

CheckpointMeta train_meta(const TrainConfig& cfg) {
    auto num = [](double v) {
        char buf[32];
        auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    };
    return {{"loss", std::string(to_string(cfg.loss))},
            {"margin", num(cfg.margin)},
            {"lr", num(cfg.lr)},
            {"momentum", num(cfg.momentum)},
            {"weight_decay", num(cfg.weight_decay)},
            {"iterations", std::to_string(cfg.iterations)},
            {"batch", std::to_string(cfg.batch)},
            {"seed", std::to_string(cfg.seed)},
            {"negatives", std::string(to_string(cfg.negatives))},
            {"exo_camera", cfg.exo_camera}};
}

}  // namespace egomatch
