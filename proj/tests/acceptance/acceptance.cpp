// Acceptance runner: one "criterion N: PASS|FAIL ..." line per criterion.
//
//   dgmnet_acceptance --group fast       criteria 1-5 and 9
//   dgmnet_acceptance --group e2e        criteria 6 and 7
//   dgmnet_acceptance --group ablation   criterion 8
//
// Exit status is 0 only when every selected criterion passes.

#include <CLI11.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "dgmnet/architectures.hpp"
#include "dgmnet/blocks.hpp"
#include "dgmnet/config.hpp"
#include "dgmnet/hashing.hpp"
#include "dgmnet/landmarks.hpp"
#include "dgmnet/losses.hpp"
#include "dgmnet/metrics.hpp"
#include "dgmnet/phantoms.hpp"
#include "dgmnet/shape_generator.hpp"
#include "dgmnet/trainer.hpp"
#include "dgmnet/volume.hpp"
#include "loss_checks.hpp"
#include "metric_oracle.hpp"

namespace fs = std::filesystem;
using namespace dgmnet;
using nn::Shape;
using nn::Tensor;

namespace {

// Tolerances and budgets.
constexpr double kLossOracleTol = 1e-9;
constexpr double kGradTol = 1e-4;
constexpr double kAsdTol = 1e-9;
constexpr std::size_t kDgmParamsMin = 1'200'000, kDgmParamsMax = 1'800'000;
constexpr double kUnetRatio = 15.0;
constexpr double kGeneratorCvMin = 0.85;
constexpr double kTestDscMin = 0.80;
constexpr std::size_t kMaxEpochs = 100;
constexpr double kAblationMargin = 0.01;

constexpr double kBudget2 = 10, kBudget3 = 60, kBudget4 = 120, kBudget5 = 120, kBudget7 = 1800,
                 kBudget8 = 3 * 3600, kBudget9 = 300;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

class ScratchDir {
public:
    explicit ScratchDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("dgmnet-acceptance-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

Tensor random_tensor(Shape s, std::mt19937_64& rng) {
    std::normal_distribution<float> g(0.0f, 1.0f);
    Tensor t(s);
    for (float& v : t.values()) v = g(rng);
    return t;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------------------------

void criterion1(Outcome& o) {
    o.detail << "clinical CT/MRI results rest on private patient data; not reproduced, "
                "substituted by the property and phantom criteria 2-9";
}

void criterion2(Outcome& o) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const auto in = check::random_instance(rng, 1 + rng() % 3, 3 + rng() % 6, 1 + rng() % 4,
                                               std::uniform_real_distribution<double>(0, 3)(rng));
        const auto ref = oracle::evaluate(in);
        const auto got = check::library_total(in, true, false).breakdown;
        for (const auto& [a, b] : {std::pair{got.total, ref.total}, {got.dice, ref.dice}, {got.ce, ref.ce},
                                   {got.cls, ref.cls}, {got.lnd, ref.lnd}}) {
            worst = std::max(worst, std::abs(a - b));
        }
    }
    o.require(worst <= kLossOracleTol, "oracle difference " + sci(worst));

    const bool fixed_points = smooth_l1(0.0) == 0.0 && smooth_l1(0.5) == 0.125 && smooth_l1(2.0) == 1.5 &&
                              smooth_l1(-2.0) == 1.5 && smooth_l1(1.0) == 0.5 && smooth_l1(-1.0) == 0.5 &&
                              smooth_l1_grad(1.0) == 1.0 && smooth_l1_grad(-1.0) == -1.0 &&
                              smooth_l1_grad(0.0) == 0.0;
    o.require(fixed_points, "smooth_l1 fixed points");
    const double secs = seconds_since(t0);
    o.require(secs < kBudget2, "runtime");
    o.detail << "50 instances, max |lib - oracle| " << sci(worst) << " (<= " << sci(kLossOracleTol)
             << "), smooth_l1 fixed points " << (fixed_points ? "exact" : "WRONG") << ", " << fixed(secs, 2)
             << " s (< " << kBudget2 << " s)";
}

std::vector<double> coords(const std::vector<double>& rows) {
    std::vector<double> out;
    for (std::size_t s = 0; s < rows.size() / 9; ++s) {
        for (std::size_t k = 1; k < 9; ++k) out.push_back(rows[s * 9 + k]);
    }
    return out;
}

std::vector<double> presence(const std::vector<double>& rows) {
    std::vector<double> out;
    for (std::size_t s = 0; s < rows.size() / 9; ++s) out.push_back(rows[s * 9]);
    return out;
}

void criterion3(Outcome& o) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(30);
    std::map<std::string, double> worst;
    for (int trial = 0; trial < 5; ++trial) {
        const auto in = check::random_instance(rng, 2, 8, 8, 0.7);

        std::vector<double> g(in.pred.size());
        dice_loss<double>(in.pred, in.target, 2, 1e-6, g);
        auto num = check::numeric_gradient(
            [&](const std::vector<double>& p) { return dice_loss<double>(p, in.target, 2, 1e-6); }, in.pred);
        worst["dice_loss"] = std::max(worst["dice_loss"], check::relative_error(g, num));

        const auto p = presence(in.lm_pred), z = presence(in.lm_true);
        g.assign(p.size(), 0.0);
        cls_loss<double>(p, z, g);
        num = check::numeric_gradient([&](const std::vector<double>& x) { return cls_loss<double>(x, z); }, p);
        worst["cls_loss"] = std::max(worst["cls_loss"], check::relative_error(g, num));

        const auto tt = coords(in.lm_true), tp = coords(in.lm_pred);
        g.assign(tp.size(), 0.0);
        landmark_loss<double>(tt, tp, z, 2, g);
        num = check::numeric_gradient([&](const std::vector<double>& x) { return landmark_loss<double>(tt, x, z, 2); },
                                      tp);
        worst["landmark_loss"] = std::max(worst["landmark_loss"], check::relative_error(g, num));

        const auto r = check::library_total(in, true);
        auto total_wrt = [&](std::vector<double> oracle::Instance::*field) {
            return check::numeric_gradient(
                [&](const std::vector<double>& x) {
                    auto c = in;
                    c.*field = x;
                    return check::library_total(c, true, false).breakdown.total;
                },
                in.*field);
        };
        worst["total_loss"] = std::max({worst["total_loss"],
                                        check::relative_error(r.mask_grad, total_wrt(&oracle::Instance::pred)),
                                        check::relative_error(r.landmark_grad, total_wrt(&oracle::Instance::lm_pred))});
    }
    for (const auto& [name, err] : worst) {
        o.require(err < kGradTol, name);
        o.detail << name << ' ' << sci(err) << ", ";
    }
    const double secs = seconds_since(t0);
    o.require(secs < kBudget3, "runtime");
    o.detail << "max relative error (< " << sci(kGradTol) << "), " << fixed(secs, 2) << " s (< " << kBudget3
             << " s)";
}

void criterion4(Outcome& o) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(40);
    std::uniform_real_distribution<float> sp(0.4f, 2.0f);
    double worst = 0.0;
    std::size_t overlap_mismatch = 0, scale_mismatch = 0, compared = 0;
    for (int i = 0; i < 100; ++i) {
        const Spacing s{sp(rng), sp(rng), sp(rng)};
        const Volume a = oracle::random_mask(rng, Dims{12, 12, 12}, s);
        const Volume b = oracle::random_mask(rng, Dims{12, 12, 12}, s);
        const auto fast = average_surface_distance(a, b);
        const auto slow = asd_oracle(a, b);
        if (fast.has_value() != slow.has_value()) {
            worst = std::numeric_limits<double>::infinity();
        } else if (fast) {
            worst = std::max({worst, std::abs(*fast - *slow), std::abs(*fast - oracle::asd(a, b))});
            ++compared;
        }

        const auto c = oracle::count(a, b);
        const auto m = overlap_metrics(a, b);
        overlap_mismatch += m.dsc != 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn) ||
                            m.sen != c.tp / static_cast<double>(c.tp + c.fn) ||
                            m.ppv != c.tp / static_cast<double>(c.tp + c.fp);

        const float k = i % 2 ? 2.0f : 0.5f;
        const Spacing scaled{s.x * k, s.y * k, s.z * k};
        const auto d = average_surface_distance(a.with_spacing(scaled), b.with_spacing(scaled));
        if (fast && (!d || *d != k * *fast)) ++scale_mismatch;
    }
    o.require(worst <= kAsdTol, "asd oracle");
    o.require(overlap_mismatch == 0, "overlap counts");
    o.require(scale_mismatch == 0, "scale equivariance");
    const double secs = seconds_since(t0);
    o.require(secs < kBudget4, "runtime");
    o.detail << "100 pairs of 12^3 masks: max |asd - oracle| " << sci(worst) << " over " << compared
             << " (<= " << sci(kAsdTol) << "), overlap mismatches " << overlap_mismatch
             << ", scale-equivariance mismatches " << scale_mismatch << ", " << fixed(secs, 2) << " s (< "
             << kBudget4 << " s)";
}

std::unique_ptr<SegmentationModel> desk_model(Variant v, std::size_t size) {
    ModelSpec s = ExperimentConfig{}.model;
    s.variant = v;
    s.input_height = s.input_width = size;
    if (v != Variant::DgmNet) return build_model(s);
    auto g = build_generator(generator_spec_for(s));
    g->freeze();
    return build_model(s, g.get());
}

void criterion5(Outcome& o) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(50);
    std::size_t shape_ok = 0, shape_total = 0;
    for (Variant v : {Variant::Unet, Variant::ResUnet, Variant::SeResUnet, Variant::SeUnet, Variant::DgmNet}) {
        for (std::size_t size : {64u, 256u}) {
            auto m = desk_model(v, size);
            const auto y = m->forward(random_tensor(Shape{2, 1, size, size}, rng), {}, nn::Context{});
            ++shape_total;
            shape_ok += y.mask.shape() == Shape{2, 1, size, size};
        }
    }
    o.require(shape_ok == shape_total, "shape preservation");

    nn::InitRng init(51);
    SqueezeExcite se(16, 4, init);
    se.force_gate(1.0f);
    const Tensor x = random_tensor(Shape{3, 16, 9, 9}, rng);
    const bool se_identity = se.forward(x, nn::Context{}) == x;
    o.require(se_identity, "SE identity");

    bool residual_identity = true;
    for (std::size_t in : {16u, 8u}) {
        ConvBlock b(in, 16, block_style(Variant::ResUnet), 4, init);
        for (auto* conv : {&b.conv1(), &b.conv2()}) {
            conv->visit_parameters("", [](const std::string&, nn::Parameter& p) { p.value.zero(); });
        }
        const Tensor xi = random_tensor(Shape{2, in, 8, 8}, rng);
        residual_identity = residual_identity && b.forward(xi, nn::Context{}) == b.skip(xi, nn::Context{});
    }
    o.require(residual_identity, "residual identity");

    ModelSpec paper;
    paper.levels = 4;
    paper.input_height = paper.input_width = 256;
    paper.variant = Variant::Unet;
    paper.base_filters = 64;
    const std::size_t unet = build_model(paper)->parameter_count();
    paper.variant = Variant::DgmNet;
    paper.base_filters = 12;
    auto g = build_generator(generator_spec_for(paper));
    g->freeze();
    const std::size_t dgm = build_model(paper, g.get())->parameter_count(true);
    o.require(dgm >= kDgmParamsMin && dgm <= kDgmParamsMax, "DGMNet parameter count");
    o.require(static_cast<double>(unet) > kUnetRatio * static_cast<double>(dgm), "Unet/DGMNet ratio");

    const double secs = seconds_since(t0);
    o.require(secs < kBudget5, "runtime");
    o.detail << "shape preserved " << shape_ok << "/" << shape_total << " (64x64, 256x256), SE identity "
             << (se_identity ? "exact" : "BROKEN") << ", residual identity "
             << (residual_identity ? "exact" : "BROKEN") << ", paper scale DGMNet " << dgm << " trainable in ["
             << kDgmParamsMin << ", " << kDgmParamsMax << "], Unet " << unet << " = " << fixed(double(unet) / dgm, 1)
             << "x (> " << kUnetRatio << "x), " << fixed(secs, 2) << " s (< " << kBudget5 << " s)";
}

// ---------------------------------------------------------------------------------------------

struct EndToEnd {
    double generator_cv = 0.0;
    double test_dsc = 0.0;
    std::size_t epochs_run = 0;
    std::string hash_before, hash_after, hash_direct_before, hash_direct_after;
    double probe_grad_max = -1.0;
    double probe_other_grad_mass = 0.0;
    double generator_seconds = 0.0, train_seconds = 0.0, total_seconds = 0.0;
};

/// Generator on HIGH_CONTRAST non-test cases, then DGMNet on LOW_CONTRAST, evaluated on the test split.
EndToEnd run_end_to_end(const ExperimentConfig& cfg, const fs::path& root) {
    EndToEnd r;
    const auto t0 = Clock::now();
    const fs::path manifest = generate_dataset(cfg.phantom, root / "data");

    const auto high_raw = load_cases(manifest, Modality::HighContrast);
    const auto low_raw = load_cases(manifest, Modality::LowContrast);
    std::vector<std::string> ids;
    for (const CaseRecord& c : low_raw) ids.push_back(c.case_id);
    const CaseSplit split =
        split_cases(ids, cfg.train.validation_fraction, cfg.train.test_fraction, cfg.train.rng_seed);

    std::vector<std::string> nontest = split.train;
    nontest.insert(nontest.end(), split.val.begin(), split.val.end());
    const auto high = preprocess_all(high_raw, cfg.preprocess, split.train);
    const auto gcases = generator_cases(select_cases(high, nontest), cfg.generator);
    const auto g0 = Clock::now();
    auto gen = train_generator(gcases, cfg.generator, cfg.generator_train);
    r.generator_seconds = seconds_since(g0);
    r.generator_cv = gen.mean_fold_dsc();

    const auto low = preprocess_all(low_raw, cfg.preprocess, split.train);
    const auto train = select_cases(low, split.train);
    const auto val = select_cases(low, split.val);
    const auto test = select_cases(low, split.test);
    r.hash_direct_before = state_hash(*gen.generator);
    const auto t1 = Clock::now();
    RunRecord run = train_full(train, val, gen.generator.get(), cfg.model, cfg.train);
    r.train_seconds = seconds_since(t1);
    r.hash_direct_after = state_hash(*gen.generator);
    r.hash_before = run.generator_hash_before;
    r.hash_after = run.generator_hash_after;
    r.epochs_run = run.epochs.size();

    SegmentationModel& model = *run.model;
    const MetricReport report =
        evaluate_cases([&model](const CaseRecord& c) { return predict_volume(model, c); }, test, cfg.preprocess, true);
    r.test_dsc = report.dsc.mean;

    // probe batch: one training-mode step's backward, no optimizer update
    const auto encoded = encode_case_landmarks(train, cfg.model.max_slices);
    const auto batches = make_slice_batches(train, cfg.train.batch_size, cfg.train.rng_seed + 1, 0);
    const SliceBatch b = assemble_batch(train, batches.front(), encoded, cfg.model.max_slices);
    std::mt19937_64 drop(7);
    model.zero_grad();
    const auto y = model.forward(b.images, b.positions, nn::Context{true, &drop});
    const std::vector<double> pred(y.mask.values().begin(), y.mask.values().end());
    const std::vector<double> target(b.masks.values().begin(), b.masks.values().end());
    const std::vector<double> lp(y.landmarks->values().begin(), y.landmarks->values().end());
    const std::vector<double> lt(b.landmark_targets.begin(), b.landmark_targets.end());
    const auto res = total_loss<double>(pred, target, b.refs.size(), LandmarkTerms<double>{lp, lt}, cfg.train.loss);
    Tensor dmask(y.mask.shape()), dl(y.landmarks->shape());
    for (std::size_t i = 0; i < dmask.size(); ++i) dmask[i] = static_cast<float>(res.mask_grad[i]);
    for (std::size_t i = 0; i < dl.size(); ++i) dl[i] = static_cast<float>(res.landmark_grad[i]);
    model.backward(dmask, &dl);
    r.probe_grad_max = 0.0;
    for (auto& [name, p] : model.named_parameters()) {
        double m = 0.0;
        for (float v : p->grad.values()) m = std::max(m, static_cast<double>(std::abs(v)));
        if (name.rfind("generator", 0) == 0) r.probe_grad_max = std::max(r.probe_grad_max, m);
        else r.probe_other_grad_mass += m;
    }
    r.total_seconds = seconds_since(t0);
    return r;
}

void criteria6and7(Outcome& o6, Outcome& o7) {
    ScratchDir scratch("e2e");
    ExperimentConfig cfg;
    set_config_value(cfg, "phantom.rng_seed", "0");
    set_config_value(cfg, "train.rng_seed", "0");
    cfg.validate();
    const EndToEnd r = run_end_to_end(cfg, scratch.path());

    const bool hashes = r.hash_before == r.hash_after && r.hash_direct_before == r.hash_direct_after &&
                        !r.hash_before.empty();
    o6.require(hashes, "generator hash changed");
    o6.require(r.probe_grad_max == 0.0, "non-zero generator gradient");
    o6.require(r.probe_other_grad_mass > 0.0, "probe produced no gradient at all");
    o6.detail << "generator sha256 " << r.hash_direct_before.substr(0, 16) << "... before = after: "
              << (hashes ? "yes" : "NO") << ", probe batch max |grad| over generator params " << r.probe_grad_max
              << " (other params sum of max " << sci(r.probe_other_grad_mass) << ")";

    const ModelSpec& m = cfg.model;
    o7.require(r.generator_cv >= kGeneratorCvMin, "generator CV DSC");
    o7.require(r.test_dsc >= kTestDscMin, "test DSC");
    o7.require(cfg.train.epochs <= kMaxEpochs && r.epochs_run <= kMaxEpochs, "epoch budget");
    o7.require(m.levels == 3 && m.base_filters == 8 && m.input_width == 64 && m.input_height == 64,
               "desk-scale configuration");
    o7.require(r.total_seconds <= kBudget7, "runtime");
    o7.detail << cfg.phantom.n_cases << " cases seed 0, generator " << cfg.generator_train.folds
              << "-fold mean reconstruction DSC " << fixed(r.generator_cv) << " (>= " << kGeneratorCvMin
              << "), DGMNet LOW_CONTRAST test DSC " << fixed(r.test_dsc) << " (>= " << kTestDscMin << "), "
              << r.epochs_run << " epochs (<= " << kMaxEpochs << "), levels " << m.levels << " base "
              << m.base_filters << " " << m.input_width << "x" << m.input_height << ", generator "
              << fixed(r.generator_seconds, 0) << " s + training " << fixed(r.train_seconds, 0) << " s, total "
              << fixed(r.total_seconds, 0) << " s (<= " << kBudget7 << " s)";
}

// ---------------------------------------------------------------------------------------------

void criterion8(Outcome& o, const fs::path& keep) {
    const auto t0 = Clock::now();
    ScratchDir scratch("ablation");
    const fs::path root = keep.empty() ? scratch.path() : keep;
    std::vector<double> dgm, se;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        ExperimentConfig cfg;
        set_config_value(cfg, "phantom.rng_seed", std::to_string(seed));
        set_config_value(cfg, "train.rng_seed", std::to_string(seed));
        cfg.validate();
        const fs::path dir = root / ("seed" + std::to_string(seed));
        const fs::path manifest = generate_dataset(cfg.phantom, dir / "data");
        AblationConfig ac;
        ac.preprocess = cfg.preprocess;
        ac.model = cfg.model;
        ac.generator = cfg.generator;
        ac.generator_train = cfg.generator_train;
        ac.train = cfg.train;
        const AblationTable table = run_ablation(manifest, ac, dir / "ablation");
        std::cout << "seed " << seed << " (generator CV DSC " << fixed(table.generator_mean_fold_dsc) << ")\n"
                  << table.format_text() << std::flush;

        o.require(table.rows.size() == 6, "table has " + std::to_string(table.rows.size()) + " rows");
        for (const AblationRow& row : table.rows) {
            o.require(row.error.empty(), row.method + " failed: " + row.error);
            if (row.modality != Modality::LowContrast) continue;
            if (row.method == "DGMNet") dgm.push_back(row.report.dsc.mean);
            if (row.method == "SE-Unet") se.push_back(row.report.dsc.mean);
        }
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    o.require(dgm.size() == 3 && se.size() == 3, "missing rows");
    const double md = mean(dgm), ms = mean(se);
    o.require(md >= ms - kAblationMargin, "DGMNet below SE-Unet - " + fixed(kAblationMargin, 2));
    const double secs = seconds_since(t0);
    o.require(secs <= kBudget8, "runtime");
    o.detail << "LOW_CONTRAST test DSC over seeds 0-2: DGMNet";
    for (double v : dgm) o.detail << ' ' << fixed(v);
    o.detail << " mean " << fixed(md) << ", SE-Unet";
    for (double v : se) o.detail << ' ' << fixed(v);
    o.detail << " mean " << fixed(ms) << " (need DGMNet >= SE-Unet - " << kAblationMargin << "), "
             << fixed(secs, 0) << " s (<= " << kBudget8 << " s)";
}

// ---------------------------------------------------------------------------------------------

int run_cli(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = std::string(DGMNET_CLI_PATH) + " " + args + " 2>&1";
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return -1;
    std::array<char, 4096> buf{};
    std::string out;
    while (std::fgets(buf.data(), buf.size(), p)) out += buf.data();
    const int status = ::pclose(p);
    if (output) *output = out;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
    std::set<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file()) rel.insert(fs::relative(e.path(), a));
    }
    for (const auto& e : fs::recursive_directory_iterator(b)) {
        if (e.is_regular_file() && !rel.count(fs::relative(e.path(), b))) return false;
    }
    files = rel.size();
    for (const fs::path& r : rel) {
        if (slurp(a / r) != slurp(b / r)) return false;
    }
    return true;
}

Volume random_volume(std::mt19937_64& rng, VolumeKind kind) {
    const Dims d{1 + rng() % 9, 1 + rng() % 9, 1 + rng() % 9};
    std::uniform_real_distribution<float> sp(0.1f, 4.0f), val(-1e3f, 1e3f);
    std::vector<float> data(d.voxels());
    for (float& v : data) v = kind == VolumeKind::Mask ? static_cast<float>(rng() % 2) : val(rng);
    return Volume(d, Spacing{sp(rng), sp(rng), sp(rng)}, kind, std::move(data));
}

void criterion9(Outcome& o) {
    const auto t0 = Clock::now();
    ScratchDir scratch("plumbing");
    const fs::path& root = scratch.path();

    PhantomConfig pc;
    pc.rng_seed = 0;
    generate_dataset(pc, root / "regen_a");
    generate_dataset(pc, root / "regen_b");
    std::size_t files = 0;
    const bool regen = same_tree(root / "regen_a", root / "regen_b", files);
    o.require(regen, "dataset regeneration differs");

    std::mt19937_64 rng(90);
    std::size_t roundtrip_ok = 0;
    const std::size_t roundtrips = 200;
    for (std::size_t i = 0; i < roundtrips; ++i) {
        const Volume v = random_volume(rng, i % 2 ? VolumeKind::Mask : VolumeKind::Image);
        const fs::path p = root / "rt.dgmv";
        write_volume(v, p);
        roundtrip_ok += read_volume(p) == v && decode_volume(encode_volume(v)) == v &&
                        fs::file_size(p) == kDgmvHeaderSize + 4 * v.dims().voxels();
    }
    o.require(roundtrip_ok == roundtrips, "DGMV round trip");

    const fs::path cfg = root / "tiny.cfg";
    std::ofstream(cfg) << "phantom.n_cases = 6\nphantom.width = 16\nphantom.height = 16\nphantom.depth = 8\n"
                          "phantom.semi_axis_min = 0.2\nphantom.semi_axis_max = 0.24\n"
                          "preprocess.target_width = 16\npreprocess.target_height = 16\n"
                          "model.variant = UNET\nmodel.levels = 3\nmodel.base_filters = 4\nmodel.max_slices = 8\n"
                          "model.fc_hidden = 8\nmodel.se_reduction = 2\n"
                          "train.epochs = 2\ntrain.batch_size = 4\ntrain.early_stop_patience = 0\n"
                       << "paths.data = " << (root / "data").string() << '\n';
    const std::string base = "--config " + cfg.string() + " --seed 0 ";
    auto out = [&](const std::string& name) { return " --out " + (root / name).string() + " "; };

    struct Row {
        std::string what;
        std::string args;
        int expected;
    };
    const std::vector<Row> table{
        {"generate-data", base + "generate-data", 0},
        {"existing output", base + "generate-data", 4},
        {"unknown config key", base + "--set train.bogus=1 generate-data --overwrite", 2},
        {"malformed value", base + "--set train.epochs=x train", 2},
        {"DGMNET without generator", base + "--set model.variant=DGMNET" + out("dgm") + "train", 2},
        {"missing dataset", base + "--set paths.data=" + (root / "none").string() + out("none") + "train", 3},
        {"non-finite loss", base + "--set train.learning_rate=1e30 --set train.epochs=3" + out("nan") + "train", 5},
        {"deterministic run a", base + "--deterministic" + out("det_a") + "train", 0},
        {"deterministic run b", base + "--deterministic" + out("det_b") + "train", 0},
    };
    std::size_t table_ok = 0;
    std::ostringstream codes;
    for (const Row& r : table) {
        const int code = run_cli(r.args);
        table_ok += code == r.expected;
        if (code != r.expected) o.require(false, r.what + " exited " + std::to_string(code));
        codes << code;
    }
    const std::string ma = slurp(root / "det_a" / "metrics.csv");
    const bool metrics_identical = !ma.empty() && ma == slurp(root / "det_b" / "metrics.csv");
    o.require(metrics_identical, "metrics CSV differs between seeded runs");

    const double secs = seconds_since(t0);
    o.require(secs < kBudget9, "runtime");
    o.detail << "dataset regeneration " << files << " files byte-identical: " << (regen ? "yes" : "NO")
             << ", DGMV round trips " << roundtrip_ok << "/" << roundtrips << ", exit-code table " << table_ok
             << "/" << table.size() << " (codes " << codes.str() << "), metrics CSV identical: "
             << (metrics_identical ? "yes" : "NO") << ", " << fixed(secs, 2) << " s (< " << kBudget9 << " s)";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DGMNet acceptance criteria"};
    std::string group = "fast";
    std::string keep;
    app.add_option("--group", group, "fast, e2e, ablation or all")
        ->check(CLI::IsMember({"fast", "e2e", "ablation", "all"}));
    app.add_option("--keep", keep, "Keep ablation runs under this directory");
    CLI11_PARSE(app, argc, argv);

    std::map<int, Outcome> results;
    auto guarded = [&](std::initializer_list<int> ids, const std::function<void()>& body) {
        try {
            body();
        } catch (const std::exception& e) {
            for (int id : ids) results[id].require(false, std::string("exception: ") + e.what());
        }
    };
    auto report = [&](std::initializer_list<int> ids) {
        for (int id : ids) {
            const Outcome& o = results[id];
            std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << ' ' << o.detail.str() << '\n'
                      << std::flush;
        }
    };

    const bool all = group == "all";
    if (all || group == "fast") {
        guarded({1}, [&] { criterion1(results[1]); });
        report({1});
        guarded({2}, [&] { criterion2(results[2]); });
        report({2});
        guarded({3}, [&] { criterion3(results[3]); });
        report({3});
        guarded({4}, [&] { criterion4(results[4]); });
        report({4});
        guarded({5}, [&] { criterion5(results[5]); });
        report({5});
        guarded({9}, [&] { criterion9(results[9]); });
        report({9});
    }
    if (all || group == "e2e") {
        guarded({6, 7}, [&] { criteria6and7(results[6], results[7]); });
        report({6, 7});
    }
    if (all || group == "ablation") {
        guarded({8}, [&] { criterion8(results[8], keep); });
        report({8});
    }

    bool ok = true;
    for (const auto& [id, o] : results) ok = ok && o.pass;
    return ok ? 0 : 1;
}
