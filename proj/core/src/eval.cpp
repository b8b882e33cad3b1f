#include "egomatch/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "egomatch/losses.hpp"
#include "egomatch/optim.hpp"
#include "egomatch/random.hpp"

namespace egomatch {

namespace {

std::string num(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("distance between vectors of different length");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

std::vector<ScoredPair> rank_pairs(std::span<const ScoredPair> pairs) {
    std::vector<ScoredPair> out(pairs.begin(), pairs.end());
    std::sort(out.begin(), out.end(), [](const ScoredPair& a, const ScoredPair& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.frame != b.frame) return a.frame < b.frame;
        if (a.camera != b.camera) return a.camera < b.camera;
        return a.person < b.person;
    });
    return out;
}

namespace {

std::size_t count_positives(std::span<const ScoredPair> pairs) {
    std::size_t p = 0;
    for (const ScoredPair& s : pairs) p += s.label == 1;
    if (p == 0) throw std::invalid_argument("precision/recall undefined without positive pairs");
    return p;
}

}  // namespace

std::vector<PrPoint> pr_curve(std::span<const ScoredPair> pairs) {
    const double positives = static_cast<double>(count_positives(pairs));
    const auto ranked = rank_pairs(pairs);
    std::vector<PrPoint> out;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        tp += ranked[i].label == 1;
        if (i + 1 < ranked.size() && ranked[i + 1].score == ranked[i].score) continue;
        out.push_back({tp / positives, tp / static_cast<double>(i + 1)});
    }
    return out;
}

double average_precision(std::span<const ScoredPair> pairs) {
    const std::size_t positives = count_positives(pairs);
    const auto ranked = rank_pairs(pairs);
    double sum = 0.0;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (ranked[i].label != 1) continue;
        ++tp;
        sum += static_cast<double>(tp) / static_cast<double>(i + 1);
    }
    return sum / static_cast<double>(positives);
}

double multiclass_accuracy(std::span<const FrameDecision> decisions) {
    if (decisions.empty()) return 0.0;
    std::size_t ok = 0;
    for (const FrameDecision& d : decisions) ok += d.correct();
    return static_cast<double>(ok) / static_cast<double>(decisions.size());
}

double chance_accuracy(std::span<const FrameDecision> decisions) {
    if (decisions.empty()) return 0.0;
    double s = 0.0;
    for (const FrameDecision& d : decisions) s += 1.0 / static_cast<double>(d.candidates);
    return s / static_cast<double>(decisions.size());
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["ap"] = ap;
    j["multi_accuracy"] = multi_accuracy;
    j["positives"] = positives;
    j["negatives"] = negatives;
    j["frames"] = frames;
    j["multi_frames"] = multi_frames;
    j["chance_multi_accuracy"] = chance_multi_accuracy;
    j["baseline_ap"] = baseline_ap;
    return j.dump(2) + "\n";
}

std::string pr_csv(std::span<const PrPoint> points) {
    std::string out = "recall,precision\n";
    for (const PrPoint& p : points) out += num(p.recall) + "," + num(p.precision) + "\n";
    return out;
}

std::string scores_csv(std::span<const ScoredPair> pairs) {
    std::string out = "frame,camera,person,score,label\n";
    for (const ScoredPair& p : pairs)
        out += std::to_string(p.frame) + "," + p.camera + "," + std::to_string(p.person) + "," + num(p.score) + "," +
               std::to_string(p.label) + "\n";
    return out;
}

EvalReport evaluate_samples(std::span<const FrameSample> samples, const SampleScorer& scorer) {
    EvalReport r;
    for (const FrameSample& s : samples) {
        const std::map<int, double> scores = scorer(s);
        if (scores.empty()) continue;
        ++r.frames;
        for (const auto& [person, score] : scores) {
            const int label = person == s.wearer ? 1 : 0;
            r.pairs.push_back({s.frame, s.ego_camera, person, score, label});
            (label ? r.positives : r.negatives) += 1;
        }
        if (!s.wearer_visible) continue;
        auto best = scores.begin();
        for (auto it = scores.begin(); it != scores.end(); ++it)
            if (it->second > best->second) best = it;
        r.decisions.push_back({s.frame, s.ego_camera, s.wearer, best->first, scores.size()});
    }
    r.pr = pr_curve(r.pairs);
    r.ap = average_precision(r.pairs);
    r.baseline_ap = static_cast<double>(r.positives) / static_cast<double>(r.positives + r.negatives);
    r.multi_frames = r.decisions.size();
    r.multi_accuracy = multiclass_accuracy(r.decisions);
    r.chance_multi_accuracy = chance_accuracy(r.decisions);
    return r;
}

EvalReport evaluate(const Dataset& data, const EmbeddingNet& net, FrameRange range, const std::string& exo_camera) {
    const auto samples = frame_samples(data, range, exo_camera, uses_flow(net.spec()));
    const InputBuilder inputs(data, net.spec());
    return evaluate_samples(samples, [&](const FrameSample& s) {
        std::map<int, double> scores;
        if (s.boxes.empty()) return scores;
        const Tensor e = net.embed_ego(inputs.ego(s));
        for (const Annotation& a : s.boxes) {
            const Tensor x = net.embed_exo(inputs.exo(s, a.person));
            scores[a.person] = -sq_dist(e.data(), x.data());
        }
        return scores;
    });
}

EvalReport temporal_only_eval(const Dataset& data, const EmbeddingNet& net, const std::string& observer) {
    if (net.spec().architecture != Architecture::temporal) {
        throw std::invalid_argument("temporal-only matching needs a temporal network, not " +
                                    std::string(to_string(net.spec().architecture)));
    }
    data.camera(observer);
    const bool has_boxes = std::any_of(data.annotations.begin(), data.annotations.end(),
                                       [&](const Annotation& a) { return a.camera == observer; });
    if (!has_boxes) throw DataError("camera '" + observer + "' has no person boxes");
    return evaluate(data, net, data.test, observer);
}

// ---- regression

std::vector<double> LinearRegressor::predict(std::span<const double> x) const {
    std::vector<double> y(bias);
    for (std::size_t o = 0; o < weights.size(); ++o) {
        if (weights[o].size() != x.size()) throw std::invalid_argument("regressor input has the wrong length");
        for (std::size_t i = 0; i < x.size(); ++i) y[o] += weights[o][i] * x[i];
    }
    return y;
}

LinearRegressor fit_linear_regressor(const std::vector<std::vector<double>>& x,
                                     const std::vector<std::vector<double>>& y) {
    if (x.empty() || x.size() != y.size()) throw std::invalid_argument("regression needs as many targets as inputs");
    const std::size_t din = x[0].size(), dout = y[0].size();
    if (din == 0 || dout == 0) throw std::invalid_argument("regression needs non-empty vectors");
    if (x.size() < din + 1) {
        throw std::invalid_argument("regression needs at least " + std::to_string(din + 1) + " samples, got " +
                                    std::to_string(x.size()));
    }
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd a(n, din + 1), b(n, dout);
    for (Eigen::Index r = 0; r < n; ++r) {
        if (x[r].size() != din || y[r].size() != dout) throw std::invalid_argument("ragged regression data");
        for (std::size_t c = 0; c < din; ++c) a(r, c) = x[r][c];
        a(r, din) = 1.0;
        for (std::size_t c = 0; c < dout; ++c) b(r, c) = y[r][c];
    }
    const Eigen::MatrixXd gram = a.transpose() * a;
    Eigen::MatrixXd ridged = gram;
    ridged.diagonal().array() += kRegressorRidge;
    const Eigen::MatrixXd w = ridged.ldlt().solve(a.transpose() * b);

    LinearRegressor out;
    out.degenerate = Eigen::FullPivLU<Eigen::MatrixXd>(a).rank() < static_cast<Eigen::Index>(din + 1);
    out.weights.assign(dout, std::vector<double>(din));
    out.bias.resize(dout);
    for (std::size_t o = 0; o < dout; ++o) {
        for (std::size_t i = 0; i < din; ++i) out.weights[o][i] = w(i, o);
        out.bias[o] = w(din, o);
    }
    return out;
}

// ---- baselines

std::string_view to_string(BaselineMethod m) {
    switch (m) {
        case BaselineMethod::flowmag: return "flowmag";
        case BaselineMethod::hoof: return "hoof";
        case BaselineMethod::odom_hoof: return "odom-hoof";
        case BaselineMethod::vel_mag: return "vel-mag";
        case BaselineMethod::hoof_embed: return "hoof-embed";
        case BaselineMethod::mag_embed: return "mag-embed";
    }
    return "?";
}

BaselineMethod parse_baseline(std::string_view s) {
    for (BaselineMethod m : {BaselineMethod::flowmag, BaselineMethod::hoof, BaselineMethod::odom_hoof,
                             BaselineMethod::vel_mag, BaselineMethod::hoof_embed, BaselineMethod::mag_embed})
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown baseline method '" + std::string(s) + "'");
}

namespace {

bool uses_hoof(BaselineMethod m) {
    return m == BaselineMethod::hoof || m == BaselineMethod::odom_hoof || m == BaselineMethod::hoof_embed;
}

bool is_embedding(BaselineMethod m) { return m == BaselineMethod::hoof_embed || m == BaselineMethod::mag_embed; }

int window_start(const FrameSample& s, FrameRange range) { return std::max(range.begin, s.frame - kHoofWindow + 1); }

const OdometryVector& odometry_at(const Dataset& data, const FrameSample& s) {
    const auto it = data.odometry.find(s.ego_camera);
    if (it == data.odometry.end() || s.frame >= static_cast<int>(it->second.size()))
        throw DataError("no odometry for camera '" + s.ego_camera + "'");
    return it->second[s.frame];
}

FlowField person_flow(const Dataset& data, const FrameSample& s, int person, int frame, const BBox& fallback) {
    const auto box = data.box(frame, s.exo_camera, person);
    return crop_flow(data.flows.at(s.exo_camera).at(frame), box ? box->box() : fallback, kFlowCropSize, kFlowCropSize);
}

}  // namespace

BaselineFeatures baseline_features(const Dataset& data, BaselineMethod method, const FrameSample& s, int person,
                                   FrameRange range) {
    const auto box = data.box(s.frame, s.exo_camera, person);
    if (!box) {
        throw DataError("no box for person " + std::to_string(person) + " in " + s.exo_camera + " frame " +
                        std::to_string(s.frame));
    }
    const int k0 = window_start(s, range);
    const auto& ego_flows = data.flows.at(s.ego_camera);
    BaselineFeatures f;

    if (uses_hoof(method)) {
        std::vector<HoofVector> exo;
        for (int k = k0; k <= s.frame; ++k) exo.push_back(hoof(person_flow(data, s, person, k, box->box())));
        const HoofVector he = hoof_window(exo, kHoofWindow);
        f.exo.assign(he.begin(), he.end());
    } else {
        double m = 0.0;
        for (int k = k0; k <= s.frame; ++k) m += mean_flow_magnitude(person_flow(data, s, person, k, box->box()));
        f.exo = {m / (s.frame - k0 + 1)};
    }

    switch (method) {
        case BaselineMethod::flowmag:
        case BaselineMethod::mag_embed: {
            double m = 0.0;
            for (int k = k0; k <= s.frame; ++k) m += mean_flow_magnitude(ego_flows.at(k));
            f.ego = {m / (s.frame - k0 + 1)};
            break;
        }
        case BaselineMethod::hoof:
        case BaselineMethod::hoof_embed: {
            std::vector<HoofVector> ego;
            for (int k = k0; k <= s.frame; ++k) ego.push_back(hoof(ego_flows.at(k)));
            const HoofVector he = hoof_window(ego, kHoofWindow);
            f.ego.assign(he.begin(), he.end());
            break;
        }
        case BaselineMethod::odom_hoof: {
            const OdometryVector& o = odometry_at(data, s);
            f.ego.assign(o.begin(), o.end());
            break;
        }
        case BaselineMethod::vel_mag: {
            const OdometryVector& o = odometry_at(data, s);
            f.ego.assign(o.end() - 3, o.end());
            break;
        }
    }
    return f;
}

namespace {

// f and g of the embedding baselines: linear -> relu -> linear, one per branch
struct HeadShape {
    std::size_t in, hidden;
};

HeadShape head_shape(BaselineMethod m) { return m == BaselineMethod::hoof_embed ? HeadShape{45, 64} : HeadShape{1, 16}; }

void add_head(ParameterStore& store, Group g, HeadShape hs, Rng& rng) {
    auto uniform = [&](Shape shape, std::size_t fan_in) {
        Tensor t(shape);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : t.data()) v = rng.uniform(-bound, bound);
        return t;
    };
    store.add(g, "head.0.weight", uniform({hs.hidden, hs.in}, hs.in));
    store.add(g, "head.0.bias", uniform({hs.hidden}, hs.in));
    store.add(g, "head.2.weight", uniform({hs.hidden, hs.hidden}, hs.hidden));
    store.add(g, "head.2.bias", uniform({hs.hidden}, hs.hidden));
}

Var head_forward(Graph& g, ParameterStore& store, Group group, std::span<const double> x) {
    Var h = g.constant(Tensor({x.size()}, std::vector<double>(x.begin(), x.end())));
    h = relu(linear(h, g.parameter(*store.find(group, "head.0.weight")), g.parameter(*store.find(group, "head.0.bias"))));
    return linear(h, g.parameter(*store.find(group, "head.2.weight")), g.parameter(*store.find(group, "head.2.bias")));
}

void train_heads(const Dataset& data, BaselineMethod method, const BaselineConfig& cfg, ParameterStore& store) {
    const auto samples = frame_samples(data, data.train, cfg.exo_camera, false);
    // features are fixed, so compute them once per (sample, person)
    std::vector<std::vector<double>> ego(samples.size());
    std::vector<std::map<int, std::vector<double>>> exo(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (const Annotation& a : samples[i].boxes) {
            BaselineFeatures f = baseline_features(data, method, samples[i], a.person, data.train);
            ego[i] = std::move(f.ego);
            exo[i][a.person] = std::move(f.exo);
        }
    }
    const auto pairs = make_pairs(samples);
    const auto triplets = make_triplets(samples);
    const std::size_t n = cfg.loss == LossKind::triplet ? triplets.size() : pairs.size();
    if (n == 0) throw DataError("training split yields no exemplars for the " + std::string(to_string(method)) + " baseline");

    Sgd opt(store.all(), SgdConfig{cfg.lr, cfg.momentum, cfg.weight_decay});
    std::vector<std::size_t> order = shuffle_order(n, cfg.seed, 0);
    std::size_t cursor = 0;
    std::uint64_t epoch = 0;
    for (int it = 0; it < cfg.iterations; ++it) {
        opt.zero_grad();
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor == order.size()) {
                order = shuffle_order(n, cfg.seed, ++epoch);
                cursor = 0;
            }
            const std::size_t id = order[cursor++];
            Graph g;
            Var loss;
            if (cfg.loss == LossKind::triplet) {
                const TripletSource& t = triplets[id];
                const TripletVars v{head_forward(g, store, Group::ego, ego[t.sample]),
                                    head_forward(g, store, Group::exo, exo[t.sample].at(t.positive)),
                                    head_forward(g, store, Group::exo, exo[t.sample].at(t.negative))};
                loss = triplet_loss(std::span(&v, 1), cfg.margin);
            } else {
                const PairSource& p = pairs[id];
                const PairVars v{head_forward(g, store, Group::ego, ego[p.sample]),
                                 head_forward(g, store, Group::exo, exo[p.sample].at(p.person)), p.label};
                loss = contrastive_loss(std::span(&v, 1), cfg.margin);
            }
            g.backward(loss);
        }
        opt.step();
    }
}

}  // namespace

Baseline Baseline::fit(const Dataset& data, BaselineMethod method, const BaselineConfig& cfg) {
    Baseline b;
    b.method_ = method;
    if (is_embedding(method)) {
        Rng rng(cfg.seed, 0x4845u);
        add_head(b.heads_, Group::ego, head_shape(method), rng);
        add_head(b.heads_, Group::exo, head_shape(method), rng);
        train_heads(data, method, cfg, b.heads_);
        return b;
    }
    std::vector<std::vector<double>> x, y;
    for (const FrameSample& s : frame_samples(data, data.train, cfg.exo_camera, false)) {
        if (!s.wearer_visible) continue;
        BaselineFeatures f = baseline_features(data, method, s, s.wearer, data.train);
        x.push_back(std::move(f.ego));
        y.push_back(std::move(f.exo));
    }
    if (x.empty()) throw DataError("training split has no frames with the wearer in view");
    b.regressor_ = fit_linear_regressor(x, y);
    return b;
}

double Baseline::score(std::span<const double> ego, std::span<const double> exo) const {
    if (!is_embedding(method_)) return -sq_dist(regressor_.predict(ego), exo);
    Graph g;
    auto& store = const_cast<ParameterStore&>(heads_);  // forward only reads
    const Var f = head_forward(g, store, Group::ego, ego);
    const Var x = head_forward(g, store, Group::exo, exo);
    return -sq_dist(f.value().data(), x.value().data());
}

EvalReport evaluate_baseline(const Dataset& data, const Baseline& baseline, FrameRange range,
                             const std::string& exo_camera) {
    const auto samples = frame_samples(data, range, exo_camera, false);
    return evaluate_samples(samples, [&](const FrameSample& s) {
        std::map<int, double> scores;
        for (const Annotation& a : s.boxes) {
            const BaselineFeatures f = baseline_features(data, baseline.method(), s, a.person, range);
            scores[a.person] = baseline.score(f.ego, f.exo);
        }
        return scores;
    });
}

}  // namespace egomatch
