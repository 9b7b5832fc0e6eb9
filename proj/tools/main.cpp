#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dgmnet/checkpoint.hpp"
#include "dgmnet/config.hpp"
#include "dgmnet/errors.hpp"
#include "dgmnet/metrics.hpp"
#include "dgmnet/overlay.hpp"
#include "dgmnet/phantoms.hpp"
#include "dgmnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace dgmnet;

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool overwrite = false;
    bool deterministic = false;
    std::vector<std::string> sets;
};

std::string keys_footer(unsigned command) {
    std::ostringstream os;
    os << "Config keys read:\n";
    for (const ConfigKeyInfo& k : config_keys()) {
        if (!(k.commands & command)) continue;
        os << "  " << std::left << std::setw(34) << k.key << k.description << '\n';
    }
    return os.str();
}

ExperimentConfig resolve_config(const GlobalOptions& g) {
    ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_config(g.config);
    for (const std::string& s : g.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        auto trim = [](std::string v) {
            const auto b = v.find_first_not_of(" \t");
            const auto e = v.find_last_not_of(" \t");
            return b == std::string::npos ? std::string{} : v.substr(b, e - b + 1);
        };
        set_config_value(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (g.seed) {
        set_config_value(cfg, "phantom.rng_seed", std::to_string(*g.seed));
        set_config_value(cfg, "train.rng_seed", std::to_string(*g.seed));
    }
    if (g.deterministic) set_config_value(cfg, "train.deterministic", "true");
    cfg.validate();
    return cfg;
}

/// Existing non-empty outputs need --overwrite (or are kept when `keep` is set).
void prepare_out(const fs::path& dir, bool overwrite, bool keep = false) {
    std::error_code ec;
    if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !keep) {
        if (!overwrite) throw ExistsError(dir.string());
        fs::remove_all(dir, ec);
        if (ec) throw IoError(dir.string(), "cannot remove existing output");
    }
    fs::create_directories(dir, ec);
    if (ec) throw IoError(dir.string(), "cannot create directory");
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) throw IoError(path.string(), "cannot write");
}

fs::path out_dir(const GlobalOptions& g, const ExperimentConfig& cfg, const std::string& fallback) {
    return g.out.empty() ? fs::path(cfg.paths.out) / fallback : fs::path(g.out);
}

fs::path manifest_path(const ExperimentConfig& cfg) { return fs::path(cfg.paths.data) / "manifest.csv"; }

CaseSplit dataset_split(const std::vector<CaseRecord>& cases, const ExperimentConfig& cfg) {
    std::vector<std::string> ids;
    for (const CaseRecord& c : cases) ids.push_back(c.case_id);
    return split_cases(ids, cfg.train.validation_fraction, cfg.train.test_fraction, cfg.train.rng_seed);
}

/// Accepts a checkpoint directory or a run directory holding `checkpoint/`.
fs::path checkpoint_dir(const fs::path& p) {
    if (!fs::exists(p / "manifest.json") && fs::exists(p / "checkpoint" / "manifest.json")) return p / "checkpoint";
    return p;
}

int cmd_generate_data(const GlobalOptions& g) {
    const ExperimentConfig cfg = resolve_config(g);
    const fs::path root = g.out.empty() ? fs::path(cfg.paths.data) : fs::path(g.out);
    prepare_out(root, g.overwrite);
    const fs::path manifest = generate_dataset(cfg.phantom, root);
    write_file(root / "config.txt", serialize_config(cfg));
    std::cout << manifest.string() << '\n';
    return 0;
}

int cmd_train_generator(const GlobalOptions& g) {
    const ExperimentConfig cfg = resolve_config(g);
    const fs::path out = out_dir(g, cfg, "generator");
    const auto high_raw = load_cases(manifest_path(cfg), Modality::HighContrast);
    const CaseSplit split = dataset_split(high_raw, cfg);
    prepare_out(out, g.overwrite);
    write_file(out / "config.txt", serialize_config(cfg));
    write_split_csv(split, out / "splits.csv");

    std::vector<std::string> nontest = split.train;
    nontest.insert(nontest.end(), split.val.begin(), split.val.end());
    const auto high = preprocess_all(high_raw, cfg.preprocess, split.train);
    const auto cases = generator_cases(select_cases(high, nontest), cfg.generator);
    auto result = train_generator(cases, cfg.generator, cfg.generator_train);
    save_generator(*result.generator, out / "checkpoint");

    std::ostringstream os;
    os << "fold,held_out,reconstruction_dsc\n" << std::setprecision(10);
    for (const auto& f : result.folds) os << f.fold << ',' << f.held_out.size() << ',' << f.reconstruction_dsc << '\n';
    write_file(out / "folds.csv", os.str());
    std::cout << "mean fold reconstruction DSC " << std::fixed << std::setprecision(4) << result.mean_fold_dsc()
              << '\n'
              << (out / "checkpoint").string() << '\n';
    return 0;
}

int cmd_train(const GlobalOptions& g, const std::string& generator_arg, const std::string& modality, bool resume) {
    const ExperimentConfig cfg = resolve_config(g);
    const Variant variant = cfg.model.variant;
    std::string lowered(to_string(variant));
    for (char& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const fs::path out = out_dir(g, cfg, "train-" + lowered);

    std::unique_ptr<ShapeGenerator> generator;
    const std::string gen_path = generator_arg.empty() ? cfg.paths.generator : generator_arg;
    if (variant == Variant::DgmNet) {
        if (gen_path.empty()) {
            throw ConfigError(
                "variant DGMNET needs a frozen generator checkpoint: run `dgmnet train-generator` first and pass "
                "--generator <dir> or set paths.generator");
        }
        generator = load_generator(checkpoint_dir(gen_path));
    }

    const auto raw = load_cases(manifest_path(cfg), modality_from_string(modality));
    const CaseSplit split = dataset_split(raw, cfg);
    prepare_out(out, g.overwrite, resume);
    const auto cases = preprocess_all(raw, cfg.preprocess, split.train);

    RunOptions opts;
    opts.out_dir = out;
    opts.resume = resume;
    opts.config_snapshot = serialize_config(cfg);
    opts.on_epoch = [](const EpochRecord& e) {
        std::cout << "epoch " << e.epoch << " loss " << std::fixed << std::setprecision(5) << e.mean_loss.total
                  << " val_dsc " << e.val_dsc << '\n'
                  << std::flush;
    };
    ModelSpec spec = cfg.model;
    const auto train = select_cases(cases, split.train);
    const auto val = select_cases(cases, split.val);
    const auto test = select_cases(cases, split.test);
    RunRecord rec = train_full(train, val, generator.get(), spec, cfg.train, opts);

    SegmentationModel& model = *rec.model;
    const MetricReport report =
        evaluate_cases([&model](const CaseRecord& c) { return predict_volume(model, c); }, test, cfg.preprocess, true);
    write_report_csv(report, out / "metrics.csv");
    write_split_csv(split, out / "splits.csv");
    std::cout << "test DSC " << format_mean_std(report.dsc) << '\n' << out.string() << '\n';
    return 0;
}

int cmd_evaluate(const GlobalOptions& g, const std::string& checkpoint, const std::string& split_name,
                 const std::string& modality, bool overlays) {
    const ExperimentConfig cfg = resolve_config(g);
    const fs::path out = out_dir(g, cfg, "evaluate");
    const fs::path ckpt = checkpoint_dir(checkpoint);
    const CheckpointInfo info = read_checkpoint_info(ckpt);
    if (info.kind != "model" && info.kind != "oracle") {
        throw ConfigError("evaluate needs a model or oracle checkpoint, got kind '" + info.kind + "'");
    }

    const auto raw = load_cases(manifest_path(cfg), modality_from_string(modality));
    const CaseSplit split = dataset_split(raw, cfg);
    std::vector<std::string> ids;
    if (split_name == "train") ids = split.train;
    else if (split_name == "val") ids = split.val;
    else if (split_name == "test") ids = split.test;
    else for (const CaseRecord& c : raw) ids.push_back(c.case_id);

    std::unique_ptr<SegmentationModel> model;
    if (info.kind == "model") model = load_model(ckpt);
    prepare_out(out, g.overwrite);
    const auto cases = select_cases(preprocess_all(raw, cfg.preprocess, split.train), ids);

    std::size_t images = 0;
    const fs::path overlay_dir = out / "overlays";
    if (overlays) fs::create_directories(overlay_dir);
    CasePredictor predict = [&](const CaseRecord& c) {
        Volume pred = model ? predict_volume(*model, c) : c.mask;
        if (overlays) images += write_overlays(c.image, c.mask, pred, overlay_dir, c.case_id);
        return pred;
    };
    const MetricReport report = evaluate_cases(predict, cases, cfg.preprocess, true);
    write_report_csv(report, out / "metrics.csv");
    for (const std::string& w : report.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "cases " << report.rows.size() << " DSC " << format_mean_std(report.dsc) << " overlays " << images
              << '\n'
              << (out / "metrics.csv").string() << '\n';
    return 0;
}

int cmd_ablate(const GlobalOptions& g, bool from_runs) {
    const ExperimentConfig cfg = resolve_config(g);
    const fs::path out = out_dir(g, cfg, "ablation");
    AblationTable table;
    if (from_runs) {
        table = load_ablation(out);
        table.write_csv(out / "ablation.csv");
        write_file(out / "ablation.txt", table.format_text());
    } else {
        prepare_out(out, g.overwrite);
        write_file(out / "config.txt", serialize_config(cfg));
        AblationConfig ac;
        ac.preprocess = cfg.preprocess;
        ac.model = cfg.model;
        ac.generator = cfg.generator;
        ac.generator_train = cfg.generator_train;
        ac.train = cfg.train;
        table = run_ablation(manifest_path(cfg), ac, out);
    }
    std::cout << table.format_text();
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ExistsError*>(&e)) return 4;
    if (dynamic_cast<const NumericError*>(&e)) return 5;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const VolumeFormatError*>(&e)) return 3;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e)) return 2;
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return 3;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DGMNet phantom experiments: data generation, training, evaluation and ablation"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOptions g;
    app.add_option("--config", g.config, "Flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Overrides phantom.rng_seed and train.rng_seed");
    app.add_option("--out", g.out, "Output directory (dataset root for generate-data)");
    app.add_option("--set", g.sets, "Config override key=value (repeatable)");
    app.add_flag("--overwrite", g.overwrite, "Replace existing outputs");
    app.add_flag("--deterministic", g.deterministic, "Force train.deterministic = true");

    auto* gen = app.add_subcommand("generate-data", "Write the phantom dataset and its manifest");
    gen->footer(keys_footer(kCmdGenerateData));

    auto* tg = app.add_subcommand("train-generator", "Five-fold CV and final fit of the shape generator");
    tg->footer(keys_footer(kCmdTrainGenerator));

    std::string generator, train_modality = "LOW_CONTRAST";
    bool resume = false;
    auto* tr = app.add_subcommand("train", "Train one segmentation variant and evaluate it on the test split");
    tr->add_option("--generator", generator, "Frozen generator checkpoint (or train-generator run directory)");
    tr->add_option("--modality", train_modality, "HIGH_CONTRAST or LOW_CONTRAST")
        ->check(CLI::IsMember({"HIGH_CONTRAST", "LOW_CONTRAST"}));
    tr->add_flag("--resume", resume, "Continue from the run directory's last epoch");
    tr->footer(keys_footer(kCmdTrain));

    std::string checkpoint, split = "test", eval_modality = "LOW_CONTRAST";
    bool no_overlays = false;
    auto* ev = app.add_subcommand("evaluate", "Per-case metrics CSV and overlay PNGs for a checkpoint");
    ev->add_option("--checkpoint", checkpoint, "Model or oracle checkpoint (or run directory)")->required();
    ev->add_option("--split", split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
    ev->add_option("--modality", eval_modality, "HIGH_CONTRAST or LOW_CONTRAST")
        ->check(CLI::IsMember({"HIGH_CONTRAST", "LOW_CONTRAST"}));
    ev->add_flag("--no-overlays", no_overlays, "Skip the overlay images");
    ev->footer(keys_footer(kCmdEvaluate));

    bool from_runs = false;
    auto* ab = app.add_subcommand("ablate", "Train every variant and emit the comparison table");
    ab->add_flag("--from-runs", from_runs, "Rebuild the table from an existing ablation directory");
    ab->footer(keys_footer(kCmdAblate));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) return cmd_generate_data(g);
        if (*tg) return cmd_train_generator(g);
        if (*tr) return cmd_train(g, generator, train_modality, resume);
        if (*ev) return cmd_evaluate(g, checkpoint, split, eval_modality, !no_overlays);
        if (*ab) return cmd_ablate(g, from_runs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 1;
}
