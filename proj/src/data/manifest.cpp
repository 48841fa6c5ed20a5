#include "esiqa/data/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "esiqa/data/image.hpp"

namespace esiqa::data {

namespace fs = std::filesystem;
using nlohmann::json;

const char* source_name(Source s) { return s == Source::captured ? "captured" : "synthesized"; }

Source parse_source(const std::string& text) {
    if (text == "captured") return Source::captured;
    if (text == "synthesized") return Source::synthesized;
    throw ManifestError("manifest: unknown source '" + text + "' (expected captured or synthesized)");
}

Manifest Manifest::parse(const std::string& json_text, const std::string& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ManifestError(std::string("manifest: invalid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
        throw ManifestError("manifest: top-level object with an \"entries\" array required");
    }
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (fs::path(base_dir) / p).string(); };

    Manifest m;
    std::set<std::string> ids;
    try {
        for (const auto& e : doc["entries"]) {
            ManifestEntry entry;
            entry.image_id = e.at("image_id").get<std::string>();
            entry.left_path = resolve(e.at("left").get<std::string>());
            entry.right_path = e.contains("right") ? resolve(e["right"].get<std::string>()) : std::string();
            entry.source = parse_source(e.value("source", std::string("captured")));
            entry.scene_id = e.value("scene_id", entry.image_id);
            entry.width = e.value("width", std::size_t{0});
            entry.height = e.value("height", std::size_t{0});
            if (entry.image_id.empty()) throw ManifestError("manifest: empty image_id");
            if (!ids.insert(entry.image_id).second) throw ManifestError("manifest: duplicate image_id " + entry.image_id);
            m.entries.push_back(std::move(entry));
        }
        if (doc.contains("labels")) {
            for (const auto& l : doc["labels"]) {
                const std::string id = l.at("image_id").get<std::string>();
                if (!ids.count(id)) throw ManifestError("manifest: label for unknown image " + id);
                m.labels[{id, parse_mode(l.at("mode").get<std::string>())}] = l.at("mos").get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw ManifestError(std::string("manifest: ") + e.what());
    } catch (const UnknownModeError& e) {
        throw ManifestError(std::string("manifest: ") + e.what());
    }
    return m;
}

Manifest Manifest::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ManifestError("manifest: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

std::string Manifest::to_json() const {
    json doc;
    doc["entries"] = json::array();
    for (const auto& e : entries) {
        json j = {{"image_id", e.image_id}, {"left", e.left_path}, {"source", source_name(e.source)}, {"scene_id", e.scene_id},
                  {"width", e.width}, {"height", e.height}};
        if (!e.right_path.empty()) j["right"] = e.right_path;
        doc["entries"].push_back(j);
    }
    doc["labels"] = json::array();
    for (const auto& [key, mos] : labels) {
        doc["labels"].push_back({{"image_id", key.first}, {"mode", std::string(mode_name(key.second))}, {"mos", mos}});
    }
    return doc.dump(2) + "\n";
}

const ManifestEntry& Manifest::entry(const std::string& image_id) const {
    for (const auto& e : entries) {
        if (e.image_id == image_id) return e;
    }
    throw ManifestError("manifest: unknown image " + image_id);
}

std::optional<double> Manifest::label(const std::string& image_id, DisplayMode mode) const {
    auto it = labels.find({image_id, mode});
    if (it == labels.end()) return std::nullopt;
    return it->second;
}

void Manifest::attach_labels(const std::vector<stats::MosEntry>& mos) {
    for (const auto& e : mos) {
        bool known = false;
        for (const auto& entry : entries) known = known || entry.image_id == e.image_id;
        if (!known) throw ManifestError("manifest: MOS for unknown image " + e.image_id);
        labels[{e.image_id, e.mode}] = e.mos;
    }
}

SplitIndices split_manifest(const Manifest& manifest, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw ManifestError("split: train fraction must lie in (0,1)");
    }
    if (manifest.entries.empty()) throw ManifestError("split: empty manifest");
    std::map<std::string, std::vector<std::size_t>> scenes;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) scenes[manifest.entries[i].scene_id].push_back(i);
    std::vector<const std::vector<std::size_t>*> groups;
    for (const auto& [id, members] : scenes) groups.push_back(&members);
    std::mt19937_64 rng(spec.seed);
    for (std::size_t i = groups.size(); i > 1; --i) std::swap(groups[i - 1], groups[static_cast<std::size_t>(rng() % i)]);

    const auto quota = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(manifest.entries.size())));
    SplitIndices split;
    for (const auto* g : groups) {
        auto& side = split.train.size() + g->size() <= quota ? split.train : split.test;
        side.insert(side.end(), g->begin(), g->end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

void validate_split(const Manifest& manifest, const SplitIndices& split) {
    std::set<std::string> train_scenes;
    for (std::size_t i : split.train) train_scenes.insert(manifest.entries.at(i).scene_id);
    for (std::size_t i : split.test) {
        const auto& scene = manifest.entries.at(i).scene_id;
        if (train_scenes.count(scene)) {
            throw LeakageError("split: scene " + scene + " appears on both the training and the test side");
        }
    }
}

Dataset load_samples(const Manifest& manifest, const std::vector<std::size_t>& indices, std::size_t side, DisplayMode mode) {
    Dataset ds;
    ds.side = side;
    ds.mode = mode;
    const bool stereo = mode != DisplayMode::flat_2d;
    for (std::size_t i : indices) {
        const ManifestEntry& e = manifest.entries.at(i);
        Sample s;
        s.image_id = e.image_id;
        s.scene_id = e.scene_id;
        s.label = manifest.label(e.image_id, mode);
        const Image left = load_image(e.left_path);
        if (e.width && e.height && (left.width != e.width || left.height != e.height)) {
            throw ManifestError("manifest: " + e.image_id + " left view is " + std::to_string(left.width) + "x" +
                                std::to_string(left.height) + ", manifest says " + std::to_string(e.width) + "x" +
                                std::to_string(e.height));
        }
        s.left = preprocess(left, side);
        if (stereo) {
            if (e.right_path.empty()) throw ManifestError("manifest: " + e.image_id + " has no right view");
            const Image right = load_image(e.right_path);
            if (right.width != left.width || right.height != left.height) {
                throw ManifestError("manifest: " + e.image_id + " resolution mismatch between views (" +
                                    std::to_string(left.width) + "x" + std::to_string(left.height) + " vs " +
                                    std::to_string(right.width) + "x" + std::to_string(right.height) + ")");
            }
            s.right = preprocess(right, side);
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

SplitDatasets load_and_split(const Manifest& manifest, const SplitSpec& spec, std::size_t side, DisplayMode mode) {
    SplitDatasets out;
    out.indices = split_manifest(manifest, spec);
    validate_split(manifest, out.indices);
    out.train = load_samples(manifest, out.indices.train, side, mode);
    out.test = load_samples(manifest, out.indices.test, side, mode);
    return out;
}

}  // namespace esiqa::data
