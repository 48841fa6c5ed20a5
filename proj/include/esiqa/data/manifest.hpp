#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "esiqa/display_mode.hpp"
#include "esiqa/stats/subjective.hpp"

namespace esiqa::data {

struct ManifestError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct LeakageError : std::logic_error {
    using std::logic_error::logic_error;
};

enum class Source { captured, synthesized };

struct ManifestEntry {
    std::string image_id;
    std::string left_path;   // resolved against the manifest directory
    std::string right_path;
    Source source = Source::captured;
    std::string scene_id;
    std::size_t width = 0;
    std::size_t height = 0;
};

/// JSON document:
///   {"entries": [{"image_id", "left", "right", "source", "scene_id",
///                 "width", "height"}, ...],
///    "labels":  [{"image_id", "mode", "mos"}, ...]}
/// "labels" is optional; relative paths are taken from the manifest's folder.
struct Manifest {
    std::vector<ManifestEntry> entries;
    std::map<std::pair<std::string, DisplayMode>, double> labels;

    static Manifest parse(const std::string& json_text, const std::string& base_dir = ".");
    static Manifest load(const std::string& path);
    std::string to_json() const;

    const ManifestEntry& entry(const std::string& image_id) const;
    std::optional<double> label(const std::string& image_id, DisplayMode mode) const;
    /// Replaces labels of the entries' modes with the given MOS table.
    void attach_labels(const std::vector<stats::MosEntry>& mos);
};

struct SplitSpec {
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Scene-grouped deterministic split: scenes are shuffled with the seed and
/// assigned whole to the training side while they fit its quota.
SplitIndices split_manifest(const Manifest& manifest, const SplitSpec& spec);

/// Throws LeakageError naming the first scene found on both sides.
void validate_split(const Manifest& manifest, const SplitIndices& split);

struct Sample {
    std::string image_id;
    std::string scene_id;
    std::vector<double> left;                 // [side, side, 3], normalized
    std::optional<std::vector<double>> right;
    std::optional<double> label;              // MOS for the requested mode
};

struct Dataset {
    std::size_t side = 0;
    DisplayMode mode = DisplayMode::flat_2d;
    std::vector<Sample> samples;
};

/// Decodes, checks view resolutions, resizes and normalizes. Right views are
/// neither opened nor decoded in 2d mode.
Dataset load_samples(const Manifest& manifest, const std::vector<std::size_t>& indices, std::size_t side, DisplayMode mode);

struct SplitDatasets {
    SplitIndices indices;
    Dataset train;
    Dataset test;
};

SplitDatasets load_and_split(const Manifest& manifest, const SplitSpec& spec, std::size_t side, DisplayMode mode);

const char* source_name(Source s);
Source parse_source(const std::string& text);

}  // namespace esiqa::data
