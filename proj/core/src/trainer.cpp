#include "dgmnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dgmnet/checkpoint.hpp"
#include "dgmnet/errors.hpp"
#include "dgmnet/hashing.hpp"
#include "dgmnet/landmarks.hpp"
#include "dgmnet/phantoms.hpp"
#include "dgmnet/rng.hpp"

namespace dgmnet {

namespace fs = std::filesystem;
using json = nlohmann::json;

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("train.learning_rate must be > 0");
    if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
        throw ValidationError("train.validation_fraction must be in (0, 0.5]");
    }
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ValidationError("train.test_fraction must be in [0, 1)");
    if (validation_fraction + test_fraction >= 1.0) throw ValidationError("validation and test fractions leave no training cases");
    loss.validate();
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    return idx;
}

std::string join_ids(std::vector<std::string> ids) {
    std::sort(ids.begin(), ids.end());
    std::string out;
    for (const auto& id : ids) out += id + ",";
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(path.string(), "cannot open for writing");
    os << text;
    if (!os) throw IoError(path.string(), "write failed");
}

std::string read_text(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path.string(), "cannot open");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json breakdown_json(const LossBreakdown& b) {
    return json{{"total", b.total}, {"mask", b.mask}, {"dice", b.dice}, {"ce", b.ce}, {"cls", b.cls}, {"lnd", b.lnd}};
}

LossBreakdown breakdown_from(const json& j) {
    return LossBreakdown{j.at("total"), j.at("mask"), j.at("dice"), j.at("ce"), j.at("cls"), j.at("lnd")};
}

json epoch_json(const EpochRecord& e) {
    return json{{"epoch", e.epoch}, {"loss", breakdown_json(e.mean_loss)}, {"val_dsc", e.val_dsc}, {"seconds", e.seconds}};
}

EpochRecord epoch_from(const json& j) {
    return EpochRecord{j.at("epoch"), breakdown_from(j.at("loss")), j.at("val_dsc"), j.at("seconds")};
}

std::string loss_row(std::size_t step, const LossBreakdown& b) {
    std::ostringstream os;
    os << std::setprecision(10) << step << ',' << b.total << ',' << b.mask << ',' << b.dice << ',' << b.ce << ','
       << b.cls << ',' << b.lnd << '\n';
    return os.str();
}

std::vector<nn::Tensor> snapshot(nn::Network& net) {
    std::vector<nn::Tensor> out;
    for (const auto& [name, p] : net.named_parameters()) out.push_back(p->value);
    for (const auto& [name, t] : net.named_buffers()) out.push_back(*t);
    return out;
}

void restore(nn::Network& net, const std::vector<nn::Tensor>& state) {
    std::size_t i = 0;
    for (const auto& [name, p] : net.named_parameters()) p->value = state.at(i++);
    for (const auto& [name, t] : net.named_buffers()) *t = state.at(i++);
}

std::string generator_hash(SegmentationModel& m) { return m.generator() ? state_hash(m, "generator.") : ""; }

std::string method_name(Variant v) {
    switch (v) {
        case Variant::Unet: return "Unet";
        case Variant::ResUnet: return "ResUnet";
        case Variant::SeResUnet: return "SE-ResUnet";
        case Variant::SeUnet: return "SE-Unet";
        case Variant::DgmNet: return "DGMNet";
    }
    return "?";
}

}  // namespace

CaseSplit split_cases(std::span<const std::string> case_ids, double validation_fraction, double test_fraction,
                      std::uint64_t seed) {
    const std::size_t n = case_ids.size();
    if (n < 3) throw ValidationError("splitting needs at least 3 cases, got " + std::to_string(n));
    std::set<std::string> unique(case_ids.begin(), case_ids.end());
    if (unique.size() != n) throw ValidationError("duplicate case ids in split input");
    std::size_t n_test = test_fraction > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * test_fraction))) : 0;
    std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * validation_fraction)));
    if (n_test + n_val >= n) throw ValidationError("split fractions leave no training cases");
    const auto order = shuffled_indices(n, derive_seed(seed, "split"));
    CaseSplit s;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& id = case_ids[order[i]];
        if (i < n_test) s.test.push_back(id);
        else if (i < n_test + n_val) s.val.push_back(id);
        else s.train.push_back(id);
    }
    return s;
}

std::string CaseSplit::hash() const {
    return sha256_hex("train:" + join_ids(train) + ";val:" + join_ids(val) + ";test:" + join_ids(test));
}

void write_split_csv(const CaseSplit& split, const fs::path& path) {
    std::ostringstream os;
    os << "case_id,split\n";
    for (const auto& id : split.train) os << id << ",train\n";
    for (const auto& id : split.val) os << id << ",val\n";
    for (const auto& id : split.test) os << id << ",test\n";
    write_text(path, os.str());
}

CaseSplit read_split_csv(const fs::path& path) {
    std::istringstream is(read_text(path));
    std::string line;
    std::getline(is, line);
    if (line != "case_id,split") throw IoError(path.string(), "unexpected split header");
    CaseSplit s;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError(path.string(), "malformed split row: " + line);
        const std::string id = line.substr(0, comma), which = line.substr(comma + 1);
        if (which == "train") s.train.push_back(id);
        else if (which == "val") s.val.push_back(id);
        else if (which == "test") s.test.push_back(id);
        else throw IoError(path.string(), "unknown split '" + which + "'");
    }
    return s;
}

std::vector<CaseRecord> select_cases(std::span<const CaseRecord> cases, std::span<const std::string> ids) {
    std::map<std::string, const CaseRecord*> by_id;
    for (const CaseRecord& c : cases) by_id[c.case_id] = &c;
    std::vector<CaseRecord> out;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError("case '" + id + "' not found");
        out.push_back(*it->second);
    }
    return out;
}

std::vector<std::vector<SliceRef>> make_slice_batches(std::span<const CaseRecord> cases, std::size_t batch_size,
                                                      std::uint64_t seed, std::size_t epoch) {
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    std::vector<SliceRef> pool;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        for (std::size_t u = 0; u < cases[i].image.depth(); ++u) pool.push_back({i, u});
    }
    if (pool.empty()) throw ValidationError("no slices to batch");
    const auto order = shuffled_indices(pool.size(), derive_seed(seed, "batches", epoch));
    std::vector<std::vector<SliceRef>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::vector<SliceRef> b;
        for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) b.push_back(pool[order[i]]);
        batches.push_back(std::move(b));
    }
    return batches;
}

std::vector<std::vector<float>> encode_case_landmarks(std::span<const CaseRecord> cases, std::size_t max_slices) {
    std::vector<std::vector<float>> out;
    out.reserve(cases.size());
    for (const CaseRecord& c : cases) out.push_back(encode_landmarks(extract_landmarks(c.mask), max_slices));
    return out;
}

SliceBatch assemble_batch(std::span<const CaseRecord> cases, std::span<const SliceRef> refs,
                          std::span<const std::vector<float>> encoded, std::size_t max_slices) {
    if (refs.empty()) throw ValidationError("empty batch");
    const Volume& first = cases[refs[0].case_index].image;
    const std::size_t H = first.height(), W = first.width(), n = refs.size();
    SliceBatch b;
    b.images = nn::Tensor(nn::Shape{n, 1, H, W});
    b.masks = nn::Tensor(nn::Shape{n, 1, H, W});
    const std::size_t dim = max_slices * kLandmarkStride;
    for (std::size_t i = 0; i < n; ++i) {
        const CaseRecord& c = cases[refs[i].case_index];
        if (c.image.width() != W || c.image.height() != H) throw ValidationError("batch slices differ in size");
        const auto img = c.image.slice(refs[i].slice);
        const auto msk = c.mask.slice(refs[i].slice);
        std::copy(img.begin(), img.end(), b.images.plane(i, 0));
        std::copy(msk.begin(), msk.end(), b.masks.plane(i, 0));
        const auto& enc = encoded[refs[i].case_index];
        if (enc.size() != dim) throw ValidationError("encoded landmark vector has wrong length");
        b.presence.push_back(enc[refs[i].slice * kLandmarkStride]);
        b.positions.push_back(slice_position(refs[i].slice, max_slices));
        b.landmark_targets.insert(b.landmark_targets.end(), enc.begin(), enc.end());
        b.refs.push_back(refs[i]);
    }
    return b;
}

Volume predict_volume(SegmentationModel& model, const CaseRecord& c, std::size_t batch_size) {
    const ModelSpec& spec = model.spec();
    const Volume& img = c.image;
    if (img.width() != spec.input_width || img.height() != spec.input_height) {
        throw ValidationError(c.case_id + ": image size does not match the model input");
    }
    const std::size_t plane = img.dims().slice_voxels();
    std::vector<float> out(img.data().size());
    for (std::size_t start = 0; start < img.depth(); start += batch_size) {
        const std::size_t n = std::min(batch_size, img.depth() - start);
        nn::Tensor x(nn::Shape{n, 1, img.height(), img.width()});
        std::vector<float> pos(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto sl = img.slice(start + i);
            std::copy(sl.begin(), sl.end(), x.plane(i, 0));
            pos[i] = slice_position(start + i, spec.max_slices);
        }
        const auto y = model.forward(x, pos, nn::Context{});
        for (std::size_t i = 0; i < n * plane; ++i) out[start * plane + i] = y.mask[i] > 0.5f ? 1.0f : 0.0f;
    }
    return Volume(img.dims(), img.spacing(), VolumeKind::Mask, std::move(out));
}

RunRecord train_full(std::span<const CaseRecord> train, std::span<const CaseRecord> val, ShapeGenerator* generator,
                     const ModelSpec& spec_in, const TrainConfig& config, const RunOptions& options) {
    config.validate();
    if (train.empty()) throw ValidationError("train_full needs at least one training case");
    if (val.empty()) throw ValidationError("train_full needs at least one validation case");
    ModelSpec spec = spec_in;
    spec.variant = config.variant;
    spec.seed = config.rng_seed;
    spec.validate();
    const bool dgm = spec.variant == Variant::DgmNet;
    if (dgm && !generator) throw ValidationError("DGMNET training requires a frozen generator");
    if (!dgm) generator = nullptr;
    if (generator && !generator->fully_frozen()) throw ValidationError("the generator must be fully frozen before training");
    for (const CaseRecord& c : train) {
        if (c.image.width() != spec.input_width || c.image.height() != spec.input_height) {
            throw ValidationError(c.case_id + ": training case does not match the model input size");
        }
        if (c.image.depth() > spec.max_slices) throw ValidationError(c.case_id + ": depth exceeds model.max_slices");
    }

    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.config = config;
    rec.model_spec = spec;
    rec.model = build_model(spec, generator);
    SegmentationModel& model = *rec.model;
    rec.generator_hash_before = generator_hash(model);

    const bool persist = !options.out_dir.empty();
    const fs::path out = options.out_dir;
    const fs::path last_dir = out / "last";
    if (persist) {
        fs::create_directories(out);
        if (!options.config_snapshot.empty()) write_text(out / "config.txt", options.config_snapshot);
        const json env{{"deterministic", config.deterministic},
                       {"nondeterministic_mode", !config.deterministic},
                       {"numeric_backend", "single-threaded CPU, fixed reduction order"},
                       {"compiler", __VERSION__},
                       {"rng_seed", config.rng_seed}};
        write_text(out / "environment.json", env.dump(2) + "\n");
    }

    nn::Adam adam(nn::AdamConfig{config.learning_rate});
    const nn::NamedParameters params = model.named_parameters();
    const auto encoded = encode_case_landmarks(train, spec.max_slices);
    const std::size_t dim = spec.landmark_dim();

    std::size_t start_epoch = 0;
    std::size_t patience = 0;
    std::vector<nn::Tensor> best_state = snapshot(model);
    if (options.resume && persist && fs::exists(last_dir / kCheckpointManifest)) {
        auto last = load_model(last_dir);
        copy_shared_state(model, *last);
        load_optimizer(adam, last_dir / "optimizer.bin");
        const json st = json::parse(read_text(last_dir / "state.json"));
        start_epoch = st.at("next_epoch");
        patience = st.at("patience");
        rec.steps = st.at("steps");
        rec.best_epoch = st.at("best_epoch");
        rec.best_val_dsc = st.at("best_val_dsc");
        for (const json& e : st.at("epochs")) rec.epochs.push_back(epoch_from(e));
        std::istringstream(st.at("dropout_rng").get<std::string>()) >> model.dropout_rng();
        if (fs::exists(out / "checkpoint" / kCheckpointManifest)) {
            auto best = load_model(out / "checkpoint");
            best_state = snapshot(*best);
        }
        rec.best_checkpoint = out / "checkpoint";
    } else if (persist) {
        write_text(out / "loss_log.csv", "step,total,mask,dice,ce,cls,lnd\n");
    }

    const CasePredictor predictor = [&model](const CaseRecord& c) { return predict_volume(model, c); };
    std::mt19937_64 noise_rng(derive_seed(config.rng_seed, "landmark-noise"));

    for (std::size_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
        const auto e0 = std::chrono::steady_clock::now();
        const auto batches = make_slice_batches(train, config.batch_size, config.rng_seed, epoch);
        LossBreakdown sum;
        std::string log_rows;
        for (const auto& refs : batches) {
            SliceBatch b = assemble_batch(train, refs, encoded, spec.max_slices);
            if (options.landmark_noise) {
                std::uniform_real_distribution<float> u(-1.0f, 2.0f);
                for (float& v : b.landmark_targets) v = u(noise_rng);
            }
            const auto y = model.forward(b.images, b.positions, nn::Context{true, &model.dropout_rng()});
            const std::vector<double> pred(y.mask.values().begin(), y.mask.values().end());
            const std::vector<double> target(b.masks.values().begin(), b.masks.values().end());
            std::vector<double> lp, lt;
            std::optional<LandmarkTerms<double>> terms;
            if (y.landmarks) {
                lp.assign(y.landmarks->values().begin(), y.landmarks->values().end());
                lt.assign(b.landmark_targets.begin(), b.landmark_targets.end());
                terms = LandmarkTerms<double>{lp, lt};
            }
            const auto res = total_loss<double>(pred, target, refs.size(), terms, config.loss);
            const LossBreakdown& lb = res.breakdown;
            if (!std::isfinite(lb.total)) {
                if (persist) {
                    const json diag{{"epoch", epoch}, {"step", rec.steps}, {"loss", breakdown_json(lb)}};
                    write_text(out / "nan_abort.json", diag.dump(2) + "\n");
                }
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(rec.steps));
            }
            nn::Tensor dmask(y.mask.shape());
            for (std::size_t i = 0; i < dmask.size(); ++i) dmask[i] = static_cast<float>(res.mask_grad[i]);
            nn::Tensor dl;
            if (y.landmarks) {
                dl = nn::Tensor(nn::Shape{refs.size(), dim, 1, 1});
                for (std::size_t i = 0; i < dl.size(); ++i) dl[i] = static_cast<float>(res.landmark_grad[i]);
            }
            model.zero_grad();
            model.backward(dmask, y.landmarks ? &dl : nullptr);
            adam.step(params);
            ++rec.steps;
            sum.total += lb.total;
            sum.mask += lb.mask;
            sum.dice += lb.dice;
            sum.ce += lb.ce;
            sum.cls += lb.cls;
            sum.lnd += lb.lnd;
            if (persist) log_rows += loss_row(rec.steps, lb);
        }
        const double nb = static_cast<double>(batches.size());
        EpochRecord er;
        er.epoch = epoch;
        er.mean_loss = LossBreakdown{sum.total / nb, sum.mask / nb, sum.dice / nb, sum.ce / nb, sum.cls / nb, sum.lnd / nb};
        er.val_dsc = evaluate_cases(predictor, val, PreprocessConfig{}, true).dsc.mean;
        er.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
        rec.epochs.push_back(er);

        if (er.val_dsc > rec.best_val_dsc) {
            rec.best_val_dsc = er.val_dsc;
            rec.best_epoch = epoch;
            best_state = snapshot(model);
            patience = 0;
            if (persist) {
                save_model(model, out / "checkpoint");
                rec.best_checkpoint = out / "checkpoint";
            }
        } else {
            ++patience;
        }
        if (persist) {
            std::ofstream log(out / "loss_log.csv", std::ios::app);
            log << log_rows;
            if (!log) throw IoError((out / "loss_log.csv").string(), "write failed");
            save_model(model, last_dir);
            save_optimizer(adam, last_dir / "optimizer.bin");
            std::ostringstream rng_state;
            rng_state << model.dropout_rng();
            json st{{"next_epoch", epoch + 1}, {"patience", patience}, {"steps", rec.steps},
                    {"best_epoch", rec.best_epoch}, {"best_val_dsc", rec.best_val_dsc},
                    {"dropout_rng", rng_state.str()}, {"epochs", json::array()}};
            for (const auto& e : rec.epochs) st["epochs"].push_back(epoch_json(e));
            write_text(last_dir / "state.json", st.dump() + "\n");
        }
        if (options.on_epoch) options.on_epoch(er);
        if (options.stop_after_epoch && *options.stop_after_epoch == epoch) break;
        if (config.early_stop_patience > 0 && patience >= config.early_stop_patience) {
            rec.stopped_early = true;
            break;
        }
    }

    restore(model, best_state);
    rec.generator_hash_after = generator_hash(model);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (persist) {
        json summary{{"variant", std::string(to_string(spec.variant))},
                     {"model_spec", json::parse(model_spec_to_json(spec))},
                     {"learning_rate", config.learning_rate},
                     {"batch_size", config.batch_size},
                     {"epochs_run", rec.epochs.size()},
                     {"best_epoch", rec.best_epoch},
                     {"best_val_dsc", rec.best_val_dsc},
                     {"stopped_early", rec.stopped_early},
                     {"steps", rec.steps},
                     {"wall_seconds", rec.wall_seconds},
                     {"trainable_parameters", model.parameter_count(true)},
                     {"generator_hash_before", rec.generator_hash_before},
                     {"generator_hash_after", rec.generator_hash_after},
                     {"val_dsc_curve", json::array()}};
        for (const auto& e : rec.epochs) summary["val_dsc_curve"].push_back(e.val_dsc);
        write_text(out / "run_record.json", summary.dump(2) + "\n");
    }
    if (rec.generator_hash_before != rec.generator_hash_after) {
        throw Error("frozen generator parameters changed during training");
    }
    return rec;
}

std::vector<CaseRecord> generator_cases(std::span<const CaseRecord> cases, const GeneratorSpec& spec) {
    std::vector<CaseRecord> out;
    for (const CaseRecord& c : cases) {
        CaseRecord r = c;
        if (c.mask.width() != spec.output_width || c.mask.height() != spec.output_height) {
            r.image = center_crop_resize(c.image, spec.output_width, spec.output_height);
            r.mask = center_crop_resize(c.mask, spec.output_width, spec.output_height);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<CaseRecord> preprocess_all(std::span<const CaseRecord> cases, const PreprocessConfig& config,
                                       std::span<const std::string> stats_ids) {
    config.validate();
    std::optional<IntensityStats> stats;
    if (config.normalization_scope == NormalizationScope::Dataset) {
        std::set<std::string> wanted(stats_ids.begin(), stats_ids.end());
        std::vector<Volume> resized;
        for (const CaseRecord& c : cases) {
            if (!wanted.empty() && !wanted.count(c.case_id)) continue;
            resized.push_back(center_crop_resize(resample(c.image, config.target_spacing), config.target_width,
                                                 config.target_height));
        }
        std::vector<const Volume*> ptrs;
        for (const Volume& v : resized) ptrs.push_back(&v);
        stats = intensity_stats(ptrs);
    }
    std::vector<CaseRecord> out;
    for (const CaseRecord& c : cases) out.push_back(preprocess_case(c, config, stats ? &*stats : nullptr));
    return out;
}

// ---------------------------------------------------------------------------------------------

void AblationTable::write_csv(const fs::path& path) const {
    std::ostringstream os;
    os << "method,modality,dsc,sen,asd_mm,ppv\n";
    for (const AblationRow& r : rows) {
        os << r.method << ',' << to_string(r.modality) << ',';
        if (!r.error.empty()) {
            os << "NA,NA,NA,NA\n";
            continue;
        }
        os << format_mean_std(r.report.dsc) << ',' << format_mean_std(r.report.sen) << ','
           << format_mean_std(r.report.asd) << ',' << format_mean_std(r.report.ppv) << '\n';
    }
    write_text(path, os.str());
}

std::string AblationTable::format_text() const {
    std::ostringstream os;
    os << std::left << std::setw(14) << "Method" << std::setw(15) << "Modality" << std::setw(15) << "DSC"
       << std::setw(15) << "Sen" << std::setw(15) << "ASD (mm)" << "PPV\n";
    for (const AblationRow& r : rows) {
        os << std::setw(14) << r.method << std::setw(15) << to_string(r.modality);
        if (!r.error.empty()) {
            os << "failed: " << r.error << '\n';
            continue;
        }
        // setw counts bytes; the ± sign is two bytes in UTF-8.
        os << std::setw(16) << format_mean_std(r.report.dsc) << std::setw(16) << format_mean_std(r.report.sen)
           << std::setw(16) << format_mean_std(r.report.asd) << format_mean_std(r.report.ppv) << '\n';
    }
    os << "metrics computed in the preprocessed grid\n";
    return os.str();
}

namespace {

void write_ablation_index(const AblationTable& t, const fs::path& out_dir) {
    std::ostringstream os;
    os << "method,modality,run_dir,split_hash,error\n";
    for (const AblationRow& r : t.rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        os << r.method << ',' << to_string(r.modality) << ',' << r.run_dir.filename().string() << ',' << r.split_hash
           << ',' << err << '\n';
    }
    write_text(out_dir / "ablation_index.csv", os.str());
    t.write_csv(out_dir / "ablation.csv");
    write_text(out_dir / "ablation.txt", t.format_text());
}

}  // namespace

AblationTable run_ablation(const fs::path& manifest, const AblationConfig& config, const fs::path& out_dir) {
    config.train.validate();
    const bool persist = !out_dir.empty();
    if (persist) fs::create_directories(out_dir);

    const auto high_raw = load_cases(manifest, Modality::HighContrast);
    const auto low_raw = load_cases(manifest, Modality::LowContrast);
    std::vector<std::string> ids;
    for (const CaseRecord& c : low_raw) ids.push_back(c.case_id);
    const CaseSplit split = split_cases(ids, config.train.validation_fraction, config.train.test_fraction,
                                        config.train.rng_seed);
    if (persist) write_split_csv(split, out_dir / "splits.csv");
    const auto high = preprocess_all(high_raw, config.preprocess, split.train);
    const auto low = preprocess_all(low_raw, config.preprocess, split.train);

    ModelSpec base = config.model;
    base.input_width = config.preprocess.target_width;
    base.input_height = config.preprocess.target_height;

    AblationTable table;
    std::unique_ptr<ShapeGenerator> generator;
    std::string generator_error;
    const bool needs_generator = config.include_high_contrast_row ||
                                 std::find(config.variants.begin(), config.variants.end(), Variant::DgmNet) != config.variants.end();
    if (needs_generator) {
        try {
            std::vector<std::string> nontest = split.train;
            nontest.insert(nontest.end(), split.val.begin(), split.val.end());
            const auto gcases = generator_cases(select_cases(high, nontest), config.generator);
            GeneratorTrainConfig gtc = config.generator_train;
            auto gres = train_generator(gcases, config.generator, gtc);
            table.generator_mean_fold_dsc = gres.mean_fold_dsc();
            generator = std::move(gres.generator);
            if (persist) {
                save_generator(*generator, out_dir / "generator");
                std::ostringstream os;
                os << "fold,held_out,reconstruction_dsc\n" << std::setprecision(10);
                for (const auto& f : gres.folds) os << f.fold << ',' << f.held_out.size() << ',' << f.reconstruction_dsc << '\n';
                write_text(out_dir / "generator_folds.csv", os.str());
            }
        } catch (const std::exception& e) {
            generator_error = std::string("generator training failed: ") + e.what();
        }
    }

    auto run_one = [&](Variant v, Modality m, const std::vector<CaseRecord>& cases) {
        AblationRow row;
        row.method = method_name(v);
        row.modality = m;
        row.split_hash = split.hash();
        const std::string name = std::string(to_string(m)) + "_" + std::string(to_string(v));
        if (persist) row.run_dir = out_dir / name;
        try {
            if (v == Variant::DgmNet && !generator) throw Error(generator_error);
            TrainConfig tc = config.train;
            tc.variant = v;
            RunOptions opts;
            opts.out_dir = row.run_dir;
            if (persist) opts.config_snapshot = "variant = " + std::string(to_string(v)) + "\nmodality = " + std::string(to_string(m)) + "\n";
            const auto train = select_cases(cases, split.train);
            const auto val = select_cases(cases, split.val);
            const auto test = select_cases(cases, split.test);
            RunRecord rec = train_full(train, val, generator.get(), base, tc, opts);
            SegmentationModel& model = *rec.model;
            row.report = evaluate_cases([&model](const CaseRecord& c) { return predict_volume(model, c); }, test,
                                        config.preprocess, true);
            if (persist) {
                write_report_csv(row.report, row.run_dir / "metrics.csv");
                write_split_csv(split, row.run_dir / "splits.csv");
            }
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        table.rows.push_back(std::move(row));
        if (persist) write_ablation_index(table, out_dir);
    };

    for (Variant v : config.variants) run_one(v, Modality::LowContrast, low);
    if (config.include_high_contrast_row) run_one(Variant::DgmNet, Modality::HighContrast, high);
    if (persist) write_ablation_index(table, out_dir);
    return table;
}

AblationTable load_ablation(const fs::path& out_dir) {
    std::istringstream is(read_text(out_dir / "ablation_index.csv"));
    std::string line;
    std::getline(is, line);
    if (line != "method,modality,run_dir,split_hash,error") throw IoError((out_dir / "ablation_index.csv").string(), "unexpected header");
    AblationTable t;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t pos = 0;
        for (int i = 0; i < 4; ++i) {
            const auto c = line.find(',', pos);
            if (c == std::string::npos) throw IoError((out_dir / "ablation_index.csv").string(), "malformed row: " + line);
            f.push_back(line.substr(pos, c - pos));
            pos = c + 1;
        }
        f.push_back(line.substr(pos));
        AblationRow r;
        r.method = f[0];
        r.modality = modality_from_string(f[1]);
        r.run_dir = out_dir / f[2];
        r.split_hash = f[3];
        r.error = f[4];
        if (r.error.empty()) r.report = read_report_csv(r.run_dir / "metrics.csv");
        t.rows.push_back(std::move(r));
    }
    return t;
}

}  // namespace dgmnet
