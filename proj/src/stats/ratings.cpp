#include "esiqa/stats/ratings.hpp"

#include <chrono>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <tuple>

#include "esiqa/csv.hpp"

namespace esiqa::stats {

bool is_iso8601_utc(const std::string& text) {
    static const std::regex pattern(R"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d{1,9})?(Z|\+00:00))");
    return std::regex_match(text, pattern);
}

std::string utc_now_iso8601() {
    using namespace std::chrono;
    const auto now = time_point_cast<milliseconds>(system_clock::now());
    const auto days = floor<std::chrono::days>(now);
    const year_month_day ymd{days};
    const hh_mm_ss hms{now - days};
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()), static_cast<long>(hms.subseconds().count()));
    return buf;
}

void validate_record(const RatingRecord& r) {
    if (r.participant_id.empty()) throw RatingsError("ratings: empty participant_id");
    if (r.image_id.empty()) throw RatingsError("ratings: empty image_id");
    if (r.score < kMinScore || r.score > kMaxScore) {
        throw RatingsError("ratings: score " + std::to_string(r.score) + " outside [1,10] for participant " +
                           r.participant_id + ", image " + r.image_id);
    }
    if (!is_iso8601_utc(r.timestamp)) throw RatingsError("ratings: bad UTC timestamp '" + r.timestamp + "'");
}

std::vector<RatingRecord> read_ratings(std::istream& in) {
    const csv::Table table = csv::read_table(in);
    const std::size_t c_part = table.column("participant_id");
    const std::size_t c_img = table.column("image_id");
    const std::size_t c_mode = table.column("mode");
    const std::size_t c_score = table.column("score");
    const std::size_t c_time = table.column("timestamp_iso8601");

    std::vector<RatingRecord> out;
    std::set<std::tuple<std::string, std::string, DisplayMode>> seen;
    std::size_t line = 1;
    for (const auto& row : table.rows) {
        ++line;
        RatingRecord r;
        r.participant_id = row[c_part];
        r.image_id = row[c_img];
        try {
            r.mode = parse_mode(row[c_mode]);
        } catch (const UnknownModeError& e) {
            throw RatingsError("ratings: line " + std::to_string(line) + ": " + e.what());
        }
        const std::string& s = row[c_score];
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), r.score);
        if (ec != std::errc{} || ptr != s.data() + s.size()) {
            throw RatingsError("ratings: line " + std::to_string(line) + ": score '" + s + "' is not an integer");
        }
        r.timestamp = row[c_time];
        try {
            validate_record(r);
        } catch (const RatingsError& e) {
            throw RatingsError("ratings: line " + std::to_string(line) + ": " + e.what());
        }
        if (!seen.emplace(r.participant_id, r.image_id, r.mode).second) {
            throw RatingsError("ratings: line " + std::to_string(line) + ": duplicate rating of " + r.image_id + " by " +
                               r.participant_id + " in mode " + std::string(mode_name(r.mode)));
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RatingRecord> read_ratings_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RatingsError("ratings: cannot open " + path);
    return read_ratings(in);
}

std::string format_rating_line(const RatingRecord& r) {
    std::ostringstream os;
    csv::write_row(os, {r.participant_id, r.image_id, std::string(mode_name(r.mode)), std::to_string(r.score), r.timestamp});
    return os.str();
}

void write_ratings(std::ostream& out, const std::vector<RatingRecord>& records) {
    out << kRatingsHeader << '\n';
    for (const auto& r : records) out << format_rating_line(r);
}

std::vector<RatingRecord> filter_mode(const std::vector<RatingRecord>& records, DisplayMode mode) {
    std::vector<RatingRecord> out;
    for (const auto& r : records) {
        if (r.mode == mode) out.push_back(r);
    }
    return out;
}

}  // namespace esiqa::stats
