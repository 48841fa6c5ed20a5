#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "esiqa/display_mode.hpp"

namespace esiqa::stats {

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 10;

/// One participant's raw score for one image under one display mode.
struct RatingRecord {
    std::string participant_id;
    std::string image_id;
    DisplayMode mode = DisplayMode::flat_2d;
    int score = kMinScore;
    std::string timestamp;  // ISO-8601 UTC, e.g. 2026-10-19T08:30:00Z
};

struct RatingsError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Header of the ratings CSV.
inline constexpr const char* kRatingsHeader = "participant_id,image_id,mode,score,timestamp_iso8601";

/// Validates bounds, ids and timestamp format. Throws RatingsError.
void validate_record(const RatingRecord& record);

/// Reads a ratings CSV; duplicates of (participant, image, mode) are rejected.
std::vector<RatingRecord> read_ratings(std::istream& in);
std::vector<RatingRecord> read_ratings_file(const std::string& path);

/// One CSV line, newline terminated, without header.
std::string format_rating_line(const RatingRecord& record);
void write_ratings(std::ostream& out, const std::vector<RatingRecord>& records);

bool is_iso8601_utc(const std::string& text);
/// Current UTC time as YYYY-MM-DDTHH:MM:SS.mmmZ.
std::string utc_now_iso8601();

/// Records of one mode.
std::vector<RatingRecord> filter_mode(const std::vector<RatingRecord>& records, DisplayMode mode);

}  // namespace esiqa::stats
