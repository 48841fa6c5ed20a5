#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "esiqa/data/manifest.hpp"
#include "esiqa/display_mode.hpp"

namespace esiqa::service {

/// Carries the HTTP status the API maps it to.
struct ServiceError : std::runtime_error {
    ServiceError(int status, const std::string& what) : std::runtime_error(what), status(status) {}
    int status;
};

struct SessionView {
    std::string session_id;
    std::string participant_id;
    DisplayMode mode = DisplayMode::flat_2d;
    std::uint64_t seed = 0;
    std::vector<std::string> order;
    std::size_t cursor = 0;
    std::string created_at;
    bool resumed = false;

    bool done() const { return cursor >= order.size(); }
    std::optional<std::string> current() const;
};

struct SubmitResult {
    std::size_t cursor = 0;
    std::optional<std::string> next_image_id;
    bool done = false;
};

/// Seeded Fisher-Yates permutation of `ids`.
std::vector<std::string> seeded_permutation(std::vector<std::string> ids, std::uint64_t seed);

/// FNV-1a of participant and mode, 16 hex digits.
std::string session_id_for(const std::string& participant_id, DisplayMode mode);

/// Rating study state. The ratings log is an append-only CSV in the ratings
/// schema; a sidecar "<log>.sessions" journal records every created session
/// so a restarted service resumes them. All methods are thread-safe.
class StudyService {
public:
    StudyService(data::Manifest manifest, std::string ratings_log, std::uint64_t seed);
    ~StudyService();
    StudyService(const StudyService&) = delete;
    StudyService& operator=(const StudyService&) = delete;

    /// Idempotent per (participant, mode): an existing session is returned
    /// unchanged. Without an explicit seed the session seed is derived from
    /// the service seed and the session id.
    SessionView create_session(const std::string& participant_id, const std::string& mode,
                               std::optional<std::uint64_t> seed = std::nullopt);
    SessionView session(const std::string& session_id) const;
    /// Persists one rating (fsync before returning) and advances the cursor.
    SubmitResult submit(const std::string& session_id, const std::string& image_id, long long score);
    std::string export_csv() const;
    /// Path of the left or right view of an image.
    std::string image_path(const std::string& image_id, const std::string& view) const;
    std::size_t image_count() const;

    /// HTTP front end. start() binds (port 0 picks a free port), serves on a
    /// background thread and returns the bound port.
    int start(const std::string& host, int port);
    /// Blocks serving until stop() is called from another thread.
    void listen(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace esiqa::service
