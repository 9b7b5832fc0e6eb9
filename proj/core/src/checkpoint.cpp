#include "dgmnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "dgmnet/errors.hpp"
#include "dgmnet/hashing.hpp"

namespace dgmnet {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

struct TensorRef {
    std::string name;
    std::string role;
    nn::Tensor* tensor;
};

std::vector<TensorRef> tensor_table(nn::Network& net) {
    std::vector<TensorRef> out;
    for (const auto& [name, p] : net.named_parameters()) out.push_back({name, "param", &p->value});
    for (const auto& [name, t] : net.named_buffers()) out.push_back({name, "buffer", t});
    return out;
}

json shape_json(const nn::Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

nn::Shape shape_from_json(const json& j) {
    return nn::Shape{j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<std::size_t>(),
                     j.at(3).get<std::size_t>()};
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path.string(), "cannot open");
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const void* data, std::size_t n) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(path.string(), "cannot open for writing");
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!os) throw IoError(path.string(), "write failed");
}

void write_text(const fs::path& path, const std::string& text) { write_bytes(path, text.data(), text.size()); }

json read_manifest(const fs::path& dir) {
    const auto bytes = read_bytes(dir / kCheckpointManifest);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw IoError((dir / kCheckpointManifest).string(), std::string("malformed checkpoint manifest (") + e.what() + ")");
    }
}

json generator_spec_json(const GeneratorSpec& g) {
    return json{{"landmark_dim", g.landmark_dim},
                {"projection_channels", g.projection_channels},
                {"projection_height", g.projection_height},
                {"projection_width", g.projection_width},
                {"upconv_stages", g.upconv_stages},
                {"output_height", g.output_height},
                {"output_width", g.output_width}};
}

GeneratorSpec generator_spec_from(const json& j) {
    GeneratorSpec g;
    g.landmark_dim = j.at("landmark_dim");
    g.projection_channels = j.at("projection_channels");
    g.projection_height = j.at("projection_height");
    g.projection_width = j.at("projection_width");
    g.upconv_stages = j.at("upconv_stages");
    g.output_height = j.at("output_height");
    g.output_width = j.at("output_width");
    return g;
}

json model_spec_json(const ModelSpec& s) {
    return json{{"variant", std::string(to_string(s.variant))},
                {"levels", s.levels},
                {"base_filters", s.base_filters},
                {"se_reduction", s.se_reduction},
                {"dropout_rate", s.dropout_rate},
                {"input_height", s.input_height},
                {"input_width", s.input_width},
                {"max_slices", s.max_slices},
                {"fc_hidden", s.fc_hidden},
                {"model_path_pool", s.model_path_pool == nn::PoolKind::Average ? "avg" : "max"},
                {"extra_head_block", s.extra_head_block},
                {"seed", s.seed}};
}

ModelSpec model_spec_from(const json& j) {
    ModelSpec s;
    s.variant = variant_from_string(j.at("variant").get<std::string>());
    s.levels = j.at("levels");
    s.base_filters = j.at("base_filters");
    s.se_reduction = j.at("se_reduction");
    s.dropout_rate = j.at("dropout_rate");
    s.input_height = j.at("input_height");
    s.input_width = j.at("input_width");
    s.max_slices = j.at("max_slices");
    s.fc_hidden = j.at("fc_hidden");
    s.model_path_pool = j.at("model_path_pool").get<std::string>() == "max" ? nn::PoolKind::Max : nn::PoolKind::Average;
    s.extra_head_block = j.at("extra_head_block");
    s.seed = j.at("seed");
    return s;
}

void save_network(nn::Network& net, const fs::path& dir, json manifest) {
    fs::create_directories(dir);
    std::vector<float> payload;
    json table = json::array();
    for (const TensorRef& t : tensor_table(net)) {
        table.push_back({{"name", t.name}, {"role", t.role}, {"shape", shape_json(t.tensor->shape())},
                         {"offset", payload.size()}});
        payload.insert(payload.end(), t.tensor->values().begin(), t.tensor->values().end());
    }
    const auto* raw = reinterpret_cast<const std::uint8_t*>(payload.data());
    const std::span<const std::uint8_t> bytes(raw, payload.size() * sizeof(float));
    write_bytes(dir / kCheckpointPayload, bytes.data(), bytes.size());
    const auto frozen = net.frozen_names();
    manifest["tensors"] = table;
    manifest["frozen_names"] = frozen;
    manifest["frozen"] = net.fully_frozen();
    manifest["sha256"] = sha256_hex(bytes);
    manifest["format_version"] = 1;
    write_text(dir / kCheckpointManifest, manifest.dump(2) + "\n");
}

void load_network(nn::Network& net, const fs::path& dir, const json& manifest) {
    const auto bytes = read_bytes(dir / kCheckpointPayload);
    if (sha256_hex(bytes) != manifest.at("sha256").get<std::string>()) {
        throw IoError((dir / kCheckpointPayload).string(), "checkpoint payload hash mismatch");
    }
    if (bytes.size() % sizeof(float) != 0) throw IoError((dir / kCheckpointPayload).string(), "payload size not a multiple of 4");
    std::vector<float> payload(bytes.size() / sizeof(float));
    std::memcpy(payload.data(), bytes.data(), bytes.size());

    std::map<std::string, const json*> entries;
    for (const json& e : manifest.at("tensors")) entries[e.at("name").get<std::string>()] = &e;
    const auto table = tensor_table(net);
    if (table.size() != entries.size()) {
        throw ValidationError("checkpoint has " + std::to_string(entries.size()) + " tensors, network expects " +
                              std::to_string(table.size()));
    }
    for (const TensorRef& t : table) {
        auto it = entries.find(t.name);
        if (it == entries.end()) throw ValidationError("checkpoint is missing tensor " + t.name);
        const nn::Shape s = shape_from_json(it->second->at("shape"));
        if (!(s == t.tensor->shape())) throw ValidationError("checkpoint shape mismatch for " + t.name);
        const std::size_t off = it->second->at("offset");
        if (off + s.numel() > payload.size()) throw IoError((dir / kCheckpointPayload).string(), "payload truncated");
        std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(off), s.numel(), t.tensor->data());
    }
    std::map<std::string, bool> frozen;
    for (const auto& n : manifest.at("frozen_names")) frozen[n.get<std::string>()] = true;
    for (const auto& [name, p] : net.named_parameters()) p->frozen = frozen.count(name) > 0;
}

}  // namespace

void save_generator(ShapeGenerator& g, const fs::path& dir) {
    json m;
    m["kind"] = "generator";
    m["generator_spec"] = generator_spec_json(g.spec());
    m["modality"] = g.training_modality;
    save_network(g, dir, std::move(m));
}

std::unique_ptr<ShapeGenerator> load_generator(const fs::path& dir) {
    const json m = read_manifest(dir);
    if (m.value("kind", "") != "generator") throw ValidationError(dir.string() + " is not a generator checkpoint");
    auto g = build_generator(generator_spec_from(m.at("generator_spec")));
    load_network(*g, dir, m);
    g->training_modality = m.value("modality", "HIGH_CONTRAST");
    return g;
}

void save_model(SegmentationModel& model, const fs::path& dir) {
    json m;
    m["kind"] = "model";
    m["model_spec"] = model_spec_json(model.spec());
    if (auto* g = model.generator()) {
        m["generator_spec"] = generator_spec_json(g->spec());
        m["modality"] = g->training_modality;
    }
    save_network(model, dir, std::move(m));
}

std::unique_ptr<SegmentationModel> load_model(const fs::path& dir) {
    const json m = read_manifest(dir);
    if (m.value("kind", "") != "model") throw ValidationError(dir.string() + " is not a model checkpoint");
    const ModelSpec spec = model_spec_from(m.at("model_spec"));
    std::unique_ptr<ShapeGenerator> g;
    if (m.contains("generator_spec")) {
        g = build_generator(generator_spec_from(m.at("generator_spec")));
        g->training_modality = m.value("modality", "HIGH_CONTRAST");
    }
    auto model = std::make_unique<SegmentationModel>(spec, std::move(g));
    load_network(*model, dir, m);
    return model;
}

void save_oracle_checkpoint(const fs::path& dir) {
    fs::create_directories(dir);
    json m{{"kind", "oracle"}, {"format_version", 1}, {"frozen", true}, {"frozen_names", json::array()},
           {"tensors", json::array()}, {"sha256", sha256_hex(std::string_view{})}};
    write_bytes(dir / kCheckpointPayload, "", 0);
    write_text(dir / kCheckpointManifest, m.dump(2) + "\n");
}

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
    const json m = read_manifest(dir);
    CheckpointInfo info;
    info.kind = m.value("kind", "");
    info.modality = m.value("modality", "");
    info.frozen = m.value("frozen", false);
    info.payload_sha256 = m.value("sha256", "");
    if (m.contains("frozen_names")) info.frozen_names = m.at("frozen_names").get<std::vector<std::string>>();
    return info;
}

void save_optimizer(const nn::Adam& adam, const fs::path& path) {
    json index = json::array();
    std::vector<float> payload;
    for (const auto& [name, mom] : adam.moments()) {
        index.push_back({{"name", name}, {"shape", shape_json(mom.m.shape())}, {"offset", payload.size()}});
        payload.insert(payload.end(), mom.m.values().begin(), mom.m.values().end());
        payload.insert(payload.end(), mom.v.values().begin(), mom.v.values().end());
    }
    const json head{{"steps", adam.steps()}, {"moments", index}};
    const std::string text = head.dump();
    const std::uint64_t len = text.size();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(path.string(), "cannot open for writing");
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!os) throw IoError(path.string(), "write failed");
}

void load_optimizer(nn::Adam& adam, const fs::path& path) {
    const auto bytes = read_bytes(path);
    std::uint64_t len = 0;
    if (bytes.size() < sizeof(len)) throw IoError(path.string(), "optimizer state truncated");
    std::memcpy(&len, bytes.data(), sizeof(len));
    if (bytes.size() < sizeof(len) + len) throw IoError(path.string(), "optimizer state truncated");
    const json head = json::parse(bytes.begin() + sizeof(len), bytes.begin() + static_cast<std::ptrdiff_t>(sizeof(len) + len));
    const std::size_t base = sizeof(len) + len;
    const std::size_t floats = (bytes.size() - base) / sizeof(float);
    std::vector<float> payload(floats);
    std::memcpy(payload.data(), bytes.data() + base, floats * sizeof(float));
    auto& moments = adam.moments();
    moments.clear();
    for (const json& e : head.at("moments")) {
        const nn::Shape s = shape_from_json(e.at("shape"));
        const std::size_t off = e.at("offset");
        if (off + 2 * s.numel() > payload.size()) throw IoError(path.string(), "optimizer payload truncated");
        nn::Adam::Moments mom{nn::Tensor(s), nn::Tensor(s)};
        std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(off), s.numel(), mom.m.data());
        std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(off + s.numel()), s.numel(), mom.v.data());
        moments.emplace(e.at("name").get<std::string>(), std::move(mom));
    }
    adam.set_steps(head.at("steps").get<std::int64_t>());
}

std::string model_spec_to_json(const ModelSpec& spec) { return model_spec_json(spec).dump(); }

ModelSpec model_spec_from_json(const std::string& text) { return model_spec_from(json::parse(text)); }

}  // namespace dgmnet
