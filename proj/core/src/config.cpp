#include "dgmnet/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "dgmnet/errors.hpp"

namespace dgmnet {

namespace {

constexpr unsigned G = kCmdGenerateData, TG = kCmdTrainGenerator, T = kCmdTrain, E = kCmdEvaluate, A = kCmdAblate;
constexpr unsigned kAll = G | TG | T | E | A;

struct Entry {
    ConfigKeyInfo info;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("config key '" + key + "': invalid value '" + value + "' (expected " + expected + ")");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    if (v.empty() || v[0] == '-') bad_value(key, v, "a non-negative integer");
    std::size_t pos = 0;
    try {
        const auto x = std::stoull(v, &pos);
        if (pos != v.size()) bad_value(key, v, "a non-negative integer");
        return x;
    } catch (const std::logic_error&) {
        bad_value(key, v, "a non-negative integer");
    }
}

double parse_f64(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    try {
        const double x = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(x)) bad_value(key, v, "a finite number");
        return x;
    } catch (const std::logic_error&) {
        bad_value(key, v, "a finite number");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, "true or false");
}

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

template <typename M>
Entry size_entry(std::string key, std::string desc, unsigned cmds, M member) {
    return {{key, std::move(desc), cmds},
            [member](const ExperimentConfig& c) { return std::to_string(member(const_cast<ExperimentConfig&>(c))); },
            [member, key](ExperimentConfig& c, const std::string& v) { member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_u64(key, v)); }};
}

template <typename M>
Entry real_entry(std::string key, std::string desc, unsigned cmds, M member) {
    return {{key, std::move(desc), cmds},
            [member](const ExperimentConfig& c) { return fmt(member(const_cast<ExperimentConfig&>(c))); },
            [member, key](ExperimentConfig& c, const std::string& v) { member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_f64(key, v)); }};
}

template <typename M>
Entry bool_entry(std::string key, std::string desc, unsigned cmds, M member) {
    return {{key, std::move(desc), cmds},
            [member](const ExperimentConfig& c) { return std::string(member(const_cast<ExperimentConfig&>(c)) ? "true" : "false"); },
            [member, key](ExperimentConfig& c, const std::string& v) { member(c) = parse_bool(key, v); }};
}

template <typename M>
Entry string_entry(std::string key, std::string desc, unsigned cmds, M member) {
    return {{key, std::move(desc), cmds},
            [member](const ExperimentConfig& c) { return member(const_cast<ExperimentConfig&>(c)); },
            [member](ExperimentConfig& c, const std::string& v) { member(c) = v; }};
}

#define FIELD(expr) [](ExperimentConfig& c) -> auto& { return expr; }

std::vector<Entry> build_entries() {
    std::vector<Entry> e;
    e.push_back(size_entry("phantom.n_cases", "number of phantom case pairs", G, FIELD(c.phantom.n_cases)));
    e.push_back(size_entry("phantom.width", "phantom width in voxels", G, FIELD(c.phantom.dims.width)));
    e.push_back(size_entry("phantom.height", "phantom height in voxels", G, FIELD(c.phantom.dims.height)));
    e.push_back(size_entry("phantom.depth", "phantom slice count", G, FIELD(c.phantom.dims.depth)));
    e.push_back(real_entry("phantom.spacing_x", "voxel spacing x (mm)", G, FIELD(c.phantom.spacing.x)));
    e.push_back(real_entry("phantom.spacing_y", "voxel spacing y (mm)", G, FIELD(c.phantom.spacing.y)));
    e.push_back(real_entry("phantom.spacing_z", "voxel spacing z (mm)", G, FIELD(c.phantom.spacing.z)));
    e.push_back(size_entry("phantom.rng_seed", "dataset seed (overridden by --seed)", G, FIELD(c.phantom.rng_seed)));
    e.push_back(real_entry("phantom.semi_axis_min", "min in-plane semi-axis, fraction of size", G, FIELD(c.phantom.semi_axis_min)));
    e.push_back(real_entry("phantom.semi_axis_max", "max in-plane semi-axis, fraction of size", G, FIELD(c.phantom.semi_axis_max)));
    e.push_back(real_entry("phantom.z_semi_axis_min", "min z semi-axis, fraction of depth", G, FIELD(c.phantom.z_semi_axis_min)));
    e.push_back(real_entry("phantom.z_semi_axis_max", "max z semi-axis, fraction of depth", G, FIELD(c.phantom.z_semi_axis_max)));
    e.push_back(real_entry("phantom.center_jitter", "in-plane centre jitter, fraction of size", G, FIELD(c.phantom.center_jitter)));
    e.push_back(real_entry("phantom.z_center_jitter", "z centre jitter (voxels)", G, FIELD(c.phantom.z_center_jitter)));
    e.push_back(real_entry("phantom.perturbation", "radial harmonic amplitude", G, FIELD(c.phantom.perturbation)));
    e.push_back(real_entry("phantom.high_foreground", "HIGH_CONTRAST foreground mean", G, FIELD(c.phantom.high.foreground)));
    e.push_back(real_entry("phantom.high_background", "HIGH_CONTRAST background mean", G, FIELD(c.phantom.high.background)));
    e.push_back(real_entry("phantom.high_noise", "HIGH_CONTRAST noise std", G, FIELD(c.phantom.high.noise_std)));
    e.push_back(real_entry("phantom.high_blur", "HIGH_CONTRAST edge blur sigma (voxels)", G, FIELD(c.phantom.high.blur_sigma)));
    e.push_back(real_entry("phantom.low_foreground", "LOW_CONTRAST foreground mean", G, FIELD(c.phantom.low.foreground)));
    e.push_back(real_entry("phantom.low_background", "LOW_CONTRAST background mean", G, FIELD(c.phantom.low.background)));
    e.push_back(real_entry("phantom.low_noise", "LOW_CONTRAST noise std", G, FIELD(c.phantom.low.noise_std)));
    e.push_back(real_entry("phantom.low_blur", "LOW_CONTRAST edge blur sigma (voxels)", G, FIELD(c.phantom.low.blur_sigma)));
    e.push_back(size_entry("phantom.seeds_min", "min seed artifacts per LOW_CONTRAST case", G, FIELD(c.phantom.seeds_min)));
    e.push_back(size_entry("phantom.seeds_max", "max seed artifacts per LOW_CONTRAST case", G, FIELD(c.phantom.seeds_max)));
    e.push_back(real_entry("phantom.seed_intensity", "seed artifact intensity", G, FIELD(c.phantom.seed_intensity)));

    const unsigned P = TG | T | E | A;
    e.push_back(real_entry("preprocess.target_spacing_x", "resampling target x (mm)", P, FIELD(c.preprocess.target_spacing.x)));
    e.push_back(real_entry("preprocess.target_spacing_y", "resampling target y (mm)", P, FIELD(c.preprocess.target_spacing.y)));
    e.push_back(real_entry("preprocess.target_spacing_z", "resampling target z (mm)", P, FIELD(c.preprocess.target_spacing.z)));
    e.push_back(size_entry("preprocess.target_width", "in-plane width after resize (model input)", P, FIELD(c.preprocess.target_width)));
    e.push_back(size_entry("preprocess.target_height", "in-plane height after resize (model input)", P, FIELD(c.preprocess.target_height)));
    e.push_back({{"preprocess.normalization_scope", "per_volume or dataset", P},
                 [](const ExperimentConfig& c) {
                     return std::string(c.preprocess.normalization_scope == NormalizationScope::Dataset ? "dataset" : "per_volume");
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                     if (v == "per_volume") c.preprocess.normalization_scope = NormalizationScope::PerVolume;
                     else if (v == "dataset") c.preprocess.normalization_scope = NormalizationScope::Dataset;
                     else bad_value("preprocess.normalization_scope", v, "per_volume or dataset");
                 }});

    const unsigned M = T | A;
    e.push_back({{"model.variant", "UNET, RESUNET, SE_RESUNET, SE_UNET or DGMNET", T},
                 [](const ExperimentConfig& c) { return std::string(to_string(c.train.variant)); },
                 [](ExperimentConfig& c, const std::string& v) {
                     try {
                         c.train.variant = variant_from_string(v);
                     } catch (const ValidationError&) {
                         bad_value("model.variant", v, "UNET, RESUNET, SE_RESUNET, SE_UNET or DGMNET");
                     }
                     c.model.variant = c.train.variant;
                 }});
    e.push_back(size_entry("model.levels", "encoder depth (>= 3)", M, FIELD(c.model.levels)));
    e.push_back(size_entry("model.base_filters", "first-level filter count", M, FIELD(c.model.base_filters)));
    e.push_back(size_entry("model.se_reduction", "squeeze-excitation reduction ratio", M, FIELD(c.model.se_reduction)));
    e.push_back(real_entry("model.dropout_rate", "bottleneck dropout rate", M, FIELD(c.model.dropout_rate)));
    e.push_back(size_entry("model.max_slices", "slices covered by the landmark vector", M | TG, FIELD(c.model.max_slices)));
    e.push_back(size_entry("model.fc_hidden", "hidden width of the landmark head", M, FIELD(c.model.fc_hidden)));
    e.push_back({{"model.model_path_pool", "avg or max pooling before the landmark head", M},
                 [](const ExperimentConfig& c) { return std::string(c.model.model_path_pool == nn::PoolKind::Max ? "max" : "avg"); },
                 [](ExperimentConfig& c, const std::string& v) {
                     if (v == "avg") c.model.model_path_pool = nn::PoolKind::Average;
                     else if (v == "max") c.model.model_path_pool = nn::PoolKind::Max;
                     else bad_value("model.model_path_pool", v, "avg or max");
                 }});

    const unsigned GN = TG | A;
    e.push_back(size_entry("generator.projection_channels", "channels after the FC projection", GN, FIELD(c.generator.projection_channels)));
    e.push_back(size_entry("generator.projection_height", "projection height", GN, FIELD(c.generator.projection_height)));
    e.push_back(size_entry("generator.projection_width", "projection width", GN, FIELD(c.generator.projection_width)));
    e.push_back(size_entry("generator.upconv_stages", "number of 2x2 up-convolution stages", GN, FIELD(c.generator.upconv_stages)));
    e.push_back(size_entry("generator.output_height", "shape map height", GN, FIELD(c.generator.output_height)));
    e.push_back(size_entry("generator.output_width", "shape map width", GN, FIELD(c.generator.output_width)));
    e.push_back(size_entry("generator.folds", "cross-validation folds", GN, FIELD(c.generator_train.folds)));
    e.push_back(size_entry("generator.epochs", "generator training epochs", GN, FIELD(c.generator_train.epochs)));
    e.push_back(size_entry("generator.batch_size", "generator batch size", GN, FIELD(c.generator_train.batch_size)));
    e.push_back(real_entry("generator.learning_rate", "generator Adam learning rate", GN, FIELD(c.generator_train.learning_rate)));

    e.push_back(real_entry("loss.lambda", "weight of the classification + landmark term", M, FIELD(c.train.loss.lambda)));
    e.push_back(real_entry("loss.dice_epsilon", "Dice smoothing epsilon", M, FIELD(c.train.loss.dice_epsilon)));

    const unsigned S = TG | T | E | A;
    e.push_back(real_entry("train.learning_rate", "Adam learning rate", M, FIELD(c.train.learning_rate)));
    e.push_back(size_entry("train.batch_size", "slices per batch", M, FIELD(c.train.batch_size)));
    e.push_back(size_entry("train.epochs", "maximum epochs", M, FIELD(c.train.epochs)));
    e.push_back(real_entry("train.validation_fraction", "fraction of cases held out for validation", S, FIELD(c.train.validation_fraction)));
    e.push_back(real_entry("train.test_fraction", "fraction of cases held out for testing", S, FIELD(c.train.test_fraction)));
    e.push_back(size_entry("train.early_stop_patience", "epochs without validation improvement before stopping (0: off)", M, FIELD(c.train.early_stop_patience)));
    e.push_back(size_entry("train.rng_seed", "training and split seed (overridden by --seed)", S, FIELD(c.train.rng_seed)));
    e.push_back(bool_entry("train.deterministic", "deterministic numeric mode (overridden by --deterministic)", M, FIELD(c.train.deterministic)));

    e.push_back(string_entry("paths.data", "dataset root containing manifest.csv (generate-data output unless --out)", kAll, FIELD(c.paths.data)));
    e.push_back(string_entry("paths.generator", "frozen generator checkpoint directory (DGMNET)", T, FIELD(c.paths.generator)));
    e.push_back(string_entry("paths.out", "output directory (overridden by --out)", TG | T | E | A, FIELD(c.paths.out)));
    return e;
}

#undef FIELD

const std::vector<Entry>& entries() {
    static const std::vector<Entry> e = build_entries();
    return e;
}

const Entry* find_entry(const std::string& key) {
    for (const Entry& e : entries()) {
        if (e.info.key == key) return &e;
    }
    return nullptr;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
    preprocess.target_width = 64;
    preprocess.target_height = 64;
    model.input_width = 64;
    model.input_height = 64;
    generator.landmark_dim = model.landmark_dim();
}

void ExperimentConfig::validate() const {
    try {
        phantom.validate();
        preprocess.validate();
        ModelSpec m = model;
        m.input_width = preprocess.target_width;
        m.input_height = preprocess.target_height;
        m.validate();
        GeneratorSpec g = generator;
        g.landmark_dim = model.landmark_dim();
        g.validate();
        train.validate();
        if (generator_train.folds < 2) throw ValidationError("generator.folds must be >= 2");
        if (generator_train.batch_size < 1) throw ValidationError("generator.batch_size must be >= 1");
        if (!(generator_train.learning_rate > 0.0)) throw ValidationError("generator.learning_rate must be > 0");
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
}

const std::vector<ConfigKeyInfo>& config_keys() {
    static const std::vector<ConfigKeyInfo> keys = [] {
        std::vector<ConfigKeyInfo> k;
        for (const Entry& e : entries()) k.push_back(e.info);
        return k;
    }();
    return keys;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
    const Entry* e = find_entry(key);
    if (!e) throw ConfigError("unknown config key '" + key + "'");
    e->set(config, value);
    config.model.variant = config.train.variant;
    config.model.input_width = config.preprocess.target_width;
    config.model.input_height = config.preprocess.target_height;
    config.generator.landmark_dim = config.model.landmark_dim();
    config.generator_train.seed = config.train.rng_seed;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'section.key = value', got '" + line + "'");
        }
        set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError(path.string(), "cannot open config file");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& config) {
    std::ostringstream os;
    for (const Entry& e : entries()) os << e.info.key << " = " << e.get(config) << '\n';
    return os.str();
}

}  // namespace dgmnet
