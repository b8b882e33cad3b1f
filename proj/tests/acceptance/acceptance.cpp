// One pass/fail line per acceptance criterion. Run with criterion numbers to
// select a subset, e.g. `egomatch_acceptance 1 3 8`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "egomatch/checkpoint.hpp"
#include "egomatch/eval.hpp"
#include "egomatch/features.hpp"
#include "egomatch/gradcheck_suite.hpp"
#include "egomatch/image_io.hpp"
#include "egomatch/losses.hpp"
#include "egomatch/synthworld.hpp"
#include "egomatch/trainer.hpp"

using namespace egomatch;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- 1

Outcome gradient_correctness() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const GradCheckReport r = run_gradcheck_suite(100, 1, 1e-6);
    const double secs = seconds_since(t0);
    std::set<std::string> ops;
    for (const auto& e : r.entries) {
        ops.insert(e.op);
        o.require(e.instances == 100, e.op + " ran " + std::to_string(e.instances) + " instances");
    }
    for (const char* op : {"conv2d", "relu", "maxpool2d", "linear", "concat", "l2_sq", "contrastive_loss",
                           "triplet_loss"})
        o.require(ops.count(op) == 1, std::string(op) + " not checked");
    o.require(r.max_error() <= 1e-5, "max relative error above 1e-5");
    o.require(secs <= 60.0, "slower than 1 min");
    o.detail << r.entries.size() << " ops x 100 instances, max rel error " << r.max_error() << ", " << std::fixed
             << std::setprecision(1) << secs << " s";
    return o;
}

// ---------------------------------------------------------------- 2

double graph_contrastive(Tensor e, Tensor p, int y, double m) {
    Graph g;
    const PairVars v{g.constant(std::move(e)), g.constant(std::move(p)), y};
    return contrastive_loss(std::span<const PairVars>(&v, 1), m).value().data()[0];
}

double graph_triplet(Tensor e, Tensor p1, Tensor p0, double m) {
    Graph g;
    const TripletVars v{g.constant(std::move(e)), g.constant(std::move(p1)), g.constant(std::move(p0))};
    return triplet_loss(std::span<const TripletVars>(&v, 1), m).value().data()[0];
}

Outcome loss_unit_values() {
    Outcome o;
    int checked = 0;
    auto expect = [&](double got, double want, const std::string& what) {
        ++checked;
        o.require(std::abs(got - want) <= 1e-12, what + " gave " + std::to_string(got));
    };
    auto contrastive = [&](Tensor e, Tensor p, int y, double m, double want, const std::string& what) {
        const PairExemplar ex{e, p, y};
        expect(contrastive_loss(std::span<const PairExemplar>(&ex, 1), m), want, what);
        expect(graph_contrastive(e, p, y, m), want, what + " (graph)");
    };
    auto triplet = [&](Tensor e, Tensor p1, Tensor p0, double m, double want, const std::string& what) {
        const TripletExemplar ex{e, p1, p0};
        expect(triplet_loss(std::span<const TripletExemplar>(&ex, 1), m), want, what);
        expect(graph_triplet(e, p1, p0, m), want, what + " (graph)");
    };
    const Tensor v = Tensor::vector({0.3, -1.2, 2.0});
    contrastive(v, v, 1, 1.0, 0.0, "positive at zero distance");
    contrastive(Tensor::vector({0, 0}), Tensor::vector({3, 4}), 0, 5.0, 0.0, "negative at the margin");
    contrastive(Tensor::vector({0, 0}), Tensor::vector({3, 4}), 0, 2.0, 0.0, "negative beyond the margin");
    contrastive(Tensor::vector({0, 0}), Tensor::vector({3, 4}), 0, 6.0, 1.0, "hinge on unsquared distance");
    triplet(v, v, Tensor::vector({0.3, -1.2, 4.0}), 1.0, 0.0, "both terms vanish");
    triplet(Tensor::vector({0, 0}), Tensor::vector({0, 1}), Tensor::vector({2, 0}), 1.0, 1.0, "triplet m=1");
    triplet(Tensor::vector({0, 0}), Tensor::vector({0, 1}), Tensor::vector({2, 0}), 2.0, 2.0, "triplet m=2");
    o.detail << checked << " values within 1e-12";
    return o;
}

// ---------------------------------------------------------------- 3

// precision at each positive, averaged, from a plain descending sort
double brute_force_ap(const std::vector<double>& scores, unsigned labels) {
    std::vector<int> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    int hits = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (labels >> idx[k] & 1u) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return sum / hits;
}

Outcome ap_oracle() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    double worst = 0.0;
    int lists = 0;
    for (int round = 0; round < 3; ++round) {
        std::vector<double> scores;
        while (scores.size() < 8) {
            const double s = u(rng);
            if (std::find(scores.begin(), scores.end(), s) == scores.end()) scores.push_back(s);
        }
        for (unsigned labels = 0; labels < 256; ++labels) {
            std::vector<ScoredPair> pairs;
            for (int i = 0; i < 8; ++i) pairs.push_back({i, "ego0", i, scores[i], static_cast<int>(labels >> i & 1u)});
            if (labels == 0) {
                bool threw = false;
                try {
                    (void)average_precision(pairs);
                } catch (const std::invalid_argument&) {
                    threw = true;
                }
                o.require(threw, "AP without positives was not rejected");
                continue;
            }
            worst = std::max(worst, std::abs(average_precision(pairs) - brute_force_ap(scores, labels)));
            ++lists;
        }
    }
    const double secs = seconds_since(t0);
    o.require(worst <= 1e-12, "AP differs from the oracle");
    o.require(secs <= 10.0, "slower than 10 s");
    o.detail << lists << " labelings, max |AP - oracle| " << worst << ", " << std::fixed << std::setprecision(2)
             << secs << " s";
    return o;
}

// ---------------------------------------------------------------- 4

std::string stage_of(const std::string& name) {
    if (name.rfind("fusion", 0) == 0) return "fusion";
    const auto a = name.find('.');
    return name.substr(a + 1, name.find('.', a + 1) - a - 1);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
}

Outcome sharing_invariants() {
    Outcome o;
    WorldConfig wc;
    wc.frames = 60;
    const Dataset data = generate(wc);
    TrainConfig cfg;
    cfg.arch = Architecture::two_stream;
    cfg.sharing = SharingPolicy::semi;
    cfg.batch = 2;
    Trainer t(data, cfg);
    for (int i = 0; i < 100; ++i) t.step();

    EmbeddingNet& net = t.net();
    int shared = 0, private_layers = 0, moved = 0;
    for (const auto& e : net.params().entries()) {
        const std::string& name = e.param->name;
        const std::string stage = stage_of(name);
        if (e.group == Group::shared) {
            ++shared;
            const Parameter& a = net.resolve(Branch::ego, stage, name);
            const Parameter& b = net.resolve(Branch::exo, stage, name);
            o.require(bitwise_equal(a.value, b.value), name + " differs between branches");
        } else if (e.group == Group::ego) {
            ++private_layers;
            const Parameter& a = net.resolve(Branch::ego, stage, name);
            const Parameter& b = net.resolve(Branch::exo, stage, name);
            o.require(&a != &b, name + " is not branch private");
            if (!bitwise_equal(a.value, b.value)) ++moved;
        }
    }
    o.require(shared > 0 && private_layers > 0, "missing shared or private parameters");
    o.require(moved == private_layers, "some private early parameters are identical across branches");

    int specs = 0;
    for (Architecture arch : {Architecture::spatial, Architecture::temporal, Architecture::two_stream}) {
        const ParameterCounts c = count_parameters(default_spec(arch, SharingPolicy::semi));
        auto count = [&](SharingPolicy s) { return EmbeddingNet::build(default_spec(arch, s), 1).params().count(); };
        const std::string a(to_string(arch));
        o.require(count(SharingPolicy::semi) == 2 * c.early + c.late, a + " semi count");
        o.require(count(SharingPolicy::full) == c.early + c.late, a + " full count");
        o.require(count(SharingPolicy::none) == 2 * (c.early + c.late), a + " none count");
        ++specs;
    }
    o.detail << "100 steps: " << shared << " shared tensors identical, " << moved << "/" << private_layers
             << " private tensors diverged; counts hold for " << specs << " architectures";
    return o;
}

// ---------------------------------------------------------------- 5 and 6

struct Run {
    TrainResult result;
    EvalReport report;
};

const Dataset& default_world() {
    static const Dataset data = generate(WorldConfig{});
    return data;
}

Run train_default(SharingPolicy sharing, LossKind loss) {
    TrainConfig cfg;
    cfg.arch = Architecture::two_stream;
    cfg.sharing = sharing;
    cfg.loss = loss;
    TrainResult r = train(default_world(), cfg);
    EvalReport rep = evaluate(default_world(), r.net, default_world().test);
    std::cerr << "  two-stream " << to_string(sharing) << " " << to_string(loss) << ": multi " << rep.multi_accuracy
              << ", ap " << rep.ap << ", loss " << r.losses.front() << " -> " << r.losses.back() << ", "
              << r.seconds << " s\n";
    return {std::move(r), std::move(rep)};
}

const Run& semi_triplet() {
    static const Run run = train_default(SharingPolicy::semi, LossKind::triplet);
    return run;
}

Outcome end_to_end() {
    Outcome o;
    const Dataset& data = default_world();
    o.require(data.frames == 700 && data.train.end - data.train.begin == 500 && data.test.end - data.test.begin == 200,
              "default world is not 700 frames split 500/200");
    const Run& run = semi_triplet();
    const EvalReport& r = run.report;
    const double ratio = run.result.losses.back() / run.result.losses.front();
    o.require(r.multi_accuracy >= 0.60, "multi-class accuracy below 0.60");
    o.require(r.ap - r.baseline_ap >= 0.15, "AP gain over the positive rate below 0.15");
    o.require(ratio <= 0.5, "final loss above half the first");
    o.require(run.result.seconds <= 600.0, "training slower than 10 min");
    o.detail << std::fixed << std::setprecision(3) << "multi " << r.multi_accuracy << " (chance "
             << r.chance_multi_accuracy << "), AP " << r.ap << " vs " << r.baseline_ap << ", loss ratio " << ratio
             << ", " << std::setprecision(0) << run.result.seconds << " s";
    return o;
}

Outcome ablation_ordering() {
    Outcome o;
    const Run& semi = semi_triplet();
    const Run full = train_default(SharingPolicy::full, LossKind::triplet);
    const Run contrastive = train_default(SharingPolicy::semi, LossKind::contrastive);
    const double a = semi.report.multi_accuracy, b = full.report.multi_accuracy, c = contrastive.report.multi_accuracy;
    o.require(a >= b - 0.05, "full sharing beats semi sharing by more than 0.05");
    o.require(a >= c - 0.05, "contrastive beats triplet by more than 0.05");
    o.detail << std::fixed << std::setprecision(3) << "semi " << a << " vs full " << b << "; triplet " << a
             << " vs contrastive " << c;
    return o;
}

// ---------------------------------------------------------------- 7

Outcome format_fidelity() {
    Outcome o;
    std::mt19937_64 rng(71);
    std::uniform_int_distribution<int> q(0, 255), dim(1, 40);
    std::uniform_real_distribution<float> fu(-60.0f, 60.0f);
    const fs::path dir = fs::temp_directory_path() / "egomatch_acceptance_formats";
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (int trial = 0; trial < 20; ++trial) {
        Image img(dim(rng), dim(rng));
        for (float& v : img.values) v = static_cast<float>(q(rng)) / 255.0f;
        write_ppm(dir / "a.ppm", img);
        o.require(read_ppm(dir / "a.ppm") == img, "ppm round trip");
        o.require(encode_ppm(read_ppm(dir / "a.ppm")) == read_file_bytes(dir / "a.ppm"), "ppm re-encode");

        FlowField f(dim(rng), dim(rng));
        for (double& v : f.uv) v = fu(rng);
        write_flo(dir / "a.flo", f);
        o.require(read_flo(dir / "a.flo") == f, "flo round trip");
        o.require(encode_flo(read_flo(dir / "a.flo")) == read_file_bytes(dir / "a.flo"), "flo re-encode");
    }

    WorldConfig wc;
    wc.frames = 60;
    const Dataset data = generate(wc);
    TrainConfig cfg;
    cfg.iterations = 4;
    cfg.batch = 4;
    cfg.seed = 11;
    const TrainResult a = train(data, cfg);
    const TrainResult b = train(data, cfg);
    save_checkpoint(dir / "a.ckpt", a.net, train_meta(cfg));
    save_checkpoint(dir / "b.ckpt", b.net, train_meta(cfg));
    const auto bytes = read_file_bytes(dir / "a.ckpt");
    o.require(bytes == read_file_bytes(dir / "b.ckpt"), "repeated runs give different checkpoints");
    o.require(trace_csv(a.losses) == trace_csv(b.losses), "repeated runs give different traces");

    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    o.require(encode_checkpoint(back.net, back.meta) == bytes, "checkpoint re-encode differs");
    const auto ea = a.net.params().entries(), eb = back.net.params().entries();
    bool same = ea.size() == eb.size();
    for (std::size_t i = 0; same && i < ea.size(); ++i) same = bitwise_equal(ea[i].param->value, eb[i].param->value);
    o.require(same, "checkpoint values differ after loading");
    fs::remove_all(dir);
    o.detail << "20 ppm and 20 flo files, " << bytes.size() << "-byte checkpoint, repeated two-stream runs identical";
    return o;
}

// ---------------------------------------------------------------- 8

Outcome hoof_properties() {
    Outcome o;
    std::mt19937_64 rng(88);
    std::uniform_int_distribution<int> dim(3, 30);
    std::uniform_real_distribution<double> u(-8.0, 8.0);
    double worst_scale = 0.0, worst_sum = 0.0;
    int blocks = 0;
    for (int trial = 0; trial < 200; ++trial) {
        FlowField f(dim(rng), dim(rng));
        for (double& v : f.uv) v = u(rng);
        if (trial % 2 == 1) {
            // leave the left half still so some cells are empty
            for (int y = 0; y < f.height; ++y)
                for (int x = 0; x < f.width / 2; ++x) f.u(x, y) = f.v(x, y) = 0.0;
        }
        const HoofVector h = hoof(f);
        for (int cell = 0; cell < kHoofGrid * kHoofGrid; ++cell) {
            double s = 0.0;
            for (int b = 0; b < kHoofBins; ++b) s += h[cell * kHoofBins + b];
            if (s == 0.0) continue;
            ++blocks;
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
        for (double c : {0.5, 2.0, 10.0}) {
            FlowField g = f;
            for (double& v : g.uv) v *= c;
            const HoofVector hg = hoof(g);
            for (int i = 0; i < kHoofSize; ++i) worst_scale = std::max(worst_scale, std::abs(hg[i] - h[i]));
        }
    }
    bool zero = true;
    for (double v : hoof(FlowField(17, 11))) zero = zero && v == 0.0;
    o.require(worst_scale <= 1e-9, "scaling the flow changes the histogram");
    o.require(worst_sum <= 1e-9, "a nonzero cell block does not sum to 1");
    o.require(zero, "zero flow gives a nonzero histogram");
    o.detail << "200 fields: max scale deviation " << worst_scale << ", " << blocks << " blocks, max |sum-1| "
             << worst_sum << ", zero flow -> zero vector";
    return o;
}

// ---------------------------------------------------------------- 9

// Two wearers among three people, each with its own gait. The observer
// camera is wearable, so only a small arena and a long video give enough
// frames with both other people in its view.
Outcome temporal_only() {
    Outcome o;
    WorldConfig wc;
    wc.agents = 3;
    wc.wearers = 2;
    wc.distinct_motion = true;
    wc.arena = 5.0;
    wc.frames = 4200;
    const Dataset data = generate(wc);

    TrainConfig cfg;
    cfg.arch = Architecture::temporal;
    cfg.sharing = SharingPolicy::semi;
    cfg.loss = LossKind::contrastive;
    cfg.exo_camera = "ego1";
    const TrainResult r = train(data, cfg);
    const EvalReport rep = temporal_only_eval(data, r.net, "ego1");

    // chance is exactly 1/2 on frames where both candidates are in view
    int two = 0, right = 0;
    for (const FrameDecision& d : rep.decisions) {
        if (d.candidates != 2) continue;
        ++two;
        right += d.correct();
    }
    const double acc2 = two ? static_cast<double>(right) / two : 0.0;
    o.require(rep.positives > 0 && rep.negatives > 0 && !rep.pr.empty(), "report lacks binary metrics");
    o.require(two >= 50, "fewer than 50 two-candidate frames");
    o.require(acc2 >= 0.60, "two-candidate multi-class accuracy below 0.60");
    o.require(rep.multi_accuracy > rep.chance_multi_accuracy, "overall multi-class accuracy not above chance");
    o.detail << std::fixed << std::setprecision(3) << "two-candidate multi " << acc2 << " vs 0.5 over " << two
             << " frames; all frames " << rep.multi_accuracy << " vs " << rep.chance_multi_accuracy << ", AP " << rep.ap
             << " vs " << rep.baseline_ap << ", " << std::setprecision(0) << r.seconds << " s";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"loss unit values", loss_unit_values},
        {"AP oracle equivalence", ap_oracle},
        {"sharing invariants", sharing_invariants},
        {"end-to-end synthetic learning", end_to_end},
        {"ablation ordering", ablation_ordering},
        {"format fidelity", format_fidelity},
        {"HOOF properties", hoof_properties},
        {"temporal-only mode", temporal_only},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(n)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "threw: " << e.what();
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << n << " (" << criteria[i].first
                  << "): " << o.detail.str() << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
