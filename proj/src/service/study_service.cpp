#include "esiqa/service/study_service.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "esiqa/csv.hpp"
#include "esiqa/stats/ratings.hpp"

namespace esiqa::service {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class AppendFile {
public:
    explicit AppendFile(const std::string& path) : path_(path) {
        fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw std::runtime_error("service: cannot open " + path + ": " + std::strerror(errno));
    }
    ~AppendFile() {
        if (fd_ >= 0) ::close(fd_);
    }
    AppendFile(const AppendFile&) = delete;
    AppendFile& operator=(const AppendFile&) = delete;

    /// One write() of the whole line when the kernel allows it, then fsync.
    void append(const std::string& line) {
        const char* p = line.data();
        std::size_t left = line.size();
        while (left > 0) {
            const ssize_t n = ::write(fd_, p, left);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw std::runtime_error("service: write to " + path_ + " failed: " + std::strerror(errno));
            }
            p += n;
            left -= static_cast<std::size_t>(n);
        }
        if (::fsync(fd_) != 0) throw std::runtime_error("service: fsync of " + path_ + " failed: " + std::strerror(errno));
    }

private:
    std::string path_;
    int fd_ = -1;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Drops a trailing partial line left by an interrupted append and checks the
// header of a non-empty file.
void repair(const std::string& path, const std::string& header) {
    if (!std::filesystem::exists(path)) return;
    std::string content = read_file(path);
    if (!content.empty() && content.back() != '\n') {
        const auto keep = content.rfind('\n');
        content.resize(keep == std::string::npos ? 0 : keep + 1);
        std::filesystem::resize_file(path, content.size());
    }
    if (!content.empty() && content.compare(0, header.size() + 1, header + "\n") != 0) {
        throw std::runtime_error("service: " + path + " does not start with the header '" + header + "'");
    }
}

std::string journal_header() { return "session_id,participant_id,mode,seed,created_at"; }

json view_json(const SessionView& v) {
    json j = {{"session_id", v.session_id},
              {"participant_id", v.participant_id},
              {"mode", std::string(mode_name(v.mode))},
              {"seed", v.seed},
              {"length", v.order.size()},
              {"cursor", v.cursor},
              {"created_at", v.created_at},
              {"resumed", v.resumed},
              {"done", v.done()}};
    const auto cur = v.current();
    j["image_id"] = cur ? json(*cur) : json(nullptr);
    return j;
}

}  // namespace

std::optional<std::string> SessionView::current() const {
    if (done()) return std::nullopt;
    return order[cursor];
}

std::vector<std::string> seeded_permutation(std::vector<std::string> ids, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = ids.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(ids[i - 1], ids[pick(rng)]);
    }
    return ids;
}

std::string session_id_for(const std::string& participant_id, DisplayMode mode) {
    const std::uint64_t h = fnv1a(std::string(mode_name(mode)), fnv1a(participant_id + '\x1f'));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct StudyService::Impl {
    struct Session {
        SessionView view;
        std::mutex mu;
    };

    data::Manifest manifest;
    std::vector<std::string> ids;
    std::string log_path;
    std::string journal_path;
    std::uint64_t seed = 0;

    mutable std::mutex sessions_mu;
    std::map<std::string, std::shared_ptr<Session>> sessions;

    mutable std::mutex log_mu;
    std::unique_ptr<AppendFile> log;
    std::unique_ptr<AppendFile> journal;

    httplib::Server server;
    std::thread thread;

    std::shared_ptr<Session> find(const std::string& id) const {
        std::lock_guard lock(sessions_mu);
        auto it = sessions.find(id);
        if (it == sessions.end()) throw ServiceError(404, "unknown session " + id);
        return it->second;
    }

    std::shared_ptr<Session> make_session(const std::string& participant, DisplayMode mode, std::uint64_t s,
                                          const std::string& created_at) {
        auto session = std::make_shared<Session>();
        session->view.session_id = session_id_for(participant, mode);
        session->view.participant_id = participant;
        session->view.mode = mode;
        session->view.seed = s;
        session->view.order = seeded_permutation(ids, s);
        session->view.created_at = created_at;
        return session;
    }

    void recover() {
        const std::string log_header = stats::kRatingsHeader;
        repair(log_path, log_header);
        repair(journal_path, journal_header());
        const bool log_new = !std::filesystem::exists(log_path) || std::filesystem::file_size(log_path) == 0;
        const bool journal_new = !std::filesystem::exists(journal_path) || std::filesystem::file_size(journal_path) == 0;
        log = std::make_unique<AppendFile>(log_path);
        journal = std::make_unique<AppendFile>(journal_path);
        if (log_new) log->append(log_header + "\n");
        if (journal_new) journal->append(journal_header() + "\n");

        std::istringstream jin(read_file(journal_path));
        const csv::Table jt = csv::read_table(jin);
        for (const auto& row : jt.rows) {
            const DisplayMode mode = parse_mode(row[jt.column("mode")]);
            auto session = make_session(row[jt.column("participant_id")], mode, std::stoull(row[jt.column("seed")]),
                                        row[jt.column("created_at")]);
            sessions[session->view.session_id] = session;
        }

        std::istringstream lin(read_file(log_path));
        for (const auto& r : stats::read_ratings(lin)) {
            auto it = sessions.find(session_id_for(r.participant_id, r.mode));
            if (it == sessions.end()) continue;
            SessionView& v = it->second->view;
            if (v.done() || v.order[v.cursor] != r.image_id) {
                throw std::runtime_error("service: ratings log disagrees with the order of session " + v.session_id + " at image " +
                                         r.image_id);
            }
            ++v.cursor;
        }
    }

    void routes(StudyService* svc);
    int bind(const std::string& host, int port);
};

StudyService::StudyService(data::Manifest manifest, std::string ratings_log, std::uint64_t seed)
    : impl_(std::make_unique<Impl>()) {
    impl_->manifest = std::move(manifest);
    for (const auto& e : impl_->manifest.entries) impl_->ids.push_back(e.image_id);
    impl_->log_path = std::move(ratings_log);
    impl_->journal_path = impl_->log_path + ".sessions";
    impl_->seed = seed;
    impl_->recover();
    impl_->routes(this);
}

StudyService::~StudyService() { stop(); }

SessionView StudyService::create_session(const std::string& participant_id, const std::string& mode_text,
                                         std::optional<std::uint64_t> seed) {
    if (participant_id.empty()) throw ServiceError(400, "participant_id must not be empty");
    if (participant_id.find_first_of(",\"\r\n") != std::string::npos) {
        throw ServiceError(400, "participant_id must not contain commas, quotes or line breaks");
    }
    DisplayMode mode;
    try {
        mode = parse_mode(mode_text);
    } catch (const UnknownModeError& e) {
        throw ServiceError(400, e.what());
    }
    if (impl_->ids.empty()) throw ServiceError(409, "the manifest has no images");

    const std::string id = session_id_for(participant_id, mode);
    std::lock_guard lock(impl_->sessions_mu);
    if (auto it = impl_->sessions.find(id); it != impl_->sessions.end()) {
        std::lock_guard session_lock(it->second->mu);
        SessionView v = it->second->view;
        v.resumed = true;
        return v;
    }
    const std::uint64_t s = seed.value_or(splitmix(impl_->seed ^ fnv1a(id)));
    auto session = impl_->make_session(participant_id, mode, s, stats::utc_now_iso8601());
    {
        std::ostringstream line;
        csv::write_row(line, {id, participant_id, std::string(mode_name(mode)), std::to_string(s), session->view.created_at});
        std::lock_guard log_lock(impl_->log_mu);
        impl_->journal->append(line.str());
    }
    impl_->sessions[id] = session;
    return session->view;
}

SessionView StudyService::session(const std::string& session_id) const {
    auto s = impl_->find(session_id);
    std::lock_guard lock(s->mu);
    return s->view;
}

SubmitResult StudyService::submit(const std::string& session_id, const std::string& image_id, long long score) {
    auto s = impl_->find(session_id);
    if (score < stats::kMinScore || score > stats::kMaxScore) {
        throw ServiceError(422, "score " + std::to_string(score) + " outside [1,10]");
    }
    std::lock_guard lock(s->mu);
    SessionView& v = s->view;
    if (v.done()) throw ServiceError(409, "session " + session_id + " is complete");
    if (image_id != v.order[v.cursor]) {
        for (std::size_t i = 0; i < v.cursor; ++i) {
            if (v.order[i] == image_id) throw ServiceError(409, "image " + image_id + " was already rated in this session");
        }
        throw ServiceError(409, "expected image " + v.order[v.cursor] + ", got " + image_id);
    }
    stats::RatingRecord r{v.participant_id, image_id, v.mode, static_cast<int>(score), stats::utc_now_iso8601()};
    {
        std::lock_guard log_lock(impl_->log_mu);
        impl_->log->append(stats::format_rating_line(r));
    }
    ++v.cursor;
    return {v.cursor, v.current(), v.done()};
}

std::string StudyService::export_csv() const {
    std::lock_guard lock(impl_->log_mu);
    return read_file(impl_->log_path);
}

std::string StudyService::image_path(const std::string& image_id, const std::string& view) const {
    const data::ManifestEntry* entry = nullptr;
    for (const auto& e : impl_->manifest.entries) {
        if (e.image_id == image_id) entry = &e;
    }
    if (!entry) throw ServiceError(404, "unknown image " + image_id);
    if (view.empty() || view == "left") return entry->left_path;
    if (view == "right") {
        if (entry->right_path.empty()) throw ServiceError(404, "image " + image_id + " has no right view");
        return entry->right_path;
    }
    throw ServiceError(400, "view must be left or right");
}

std::size_t StudyService::image_count() const { return impl_->ids.size(); }

void StudyService::Impl::routes(StudyService* svc) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        int status = 500;
        std::string message = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const ServiceError& e) {
            status = e.status;
            message = e.what();
        } catch (const json::exception& e) {
            status = 400;
            message = std::string("malformed JSON body: ") + e.what();
        } catch (const std::exception& e) {
            message = e.what();
        }
        res.status = status;
        res.set_content(json{{"error", message}, {"status", status}}.dump(), "application/json");
    });
    server.Post("/sessions", [svc](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        if (!body.is_object()) throw ServiceError(400, "JSON object body required");
        std::optional<std::uint64_t> seed;
        if (body.contains("seed") && !body["seed"].is_null()) seed = body["seed"].get<std::uint64_t>();
        const SessionView v = svc->create_session(body.value("participant_id", std::string()), body.value("mode", std::string()), seed);
        res.status = v.resumed ? 200 : 201;
        res.set_content(view_json(v).dump(), "application/json");
    });
    server.Get(R"(/sessions/([0-9a-f]+)/current)", [svc](const httplib::Request& req, httplib::Response& res) {
        res.set_content(view_json(svc->session(req.matches[1])).dump(), "application/json");
    });
    server.Post(R"(/sessions/([0-9a-f]+)/ratings)", [svc](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        if (!body.is_object() || !body.contains("image_id") || !body["image_id"].is_string()) {
            throw ServiceError(400, "body must be {\"image_id\": string, \"score\": integer}");
        }
        if (!body.contains("score") || !body["score"].is_number_integer()) throw ServiceError(422, "score must be an integer in [1,10]");
        const SubmitResult r = svc->submit(req.matches[1], body["image_id"].get<std::string>(), body["score"].get<long long>());
        res.set_content(json{{"accepted", true},
                             {"cursor", r.cursor},
                             {"next_image_id", r.next_image_id ? json(*r.next_image_id) : json(nullptr)},
                             {"done", r.done}}
                            .dump(),
                        "application/json");
    });
    server.Get(R"(/images/([^/]+))", [svc](const httplib::Request& req, httplib::Response& res) {
        const std::string path = svc->image_path(req.matches[1], req.has_param("view") ? req.get_param_value("view") : "left");
        const std::string bytes = read_file(path);
        if (bytes.empty()) throw ServiceError(404, "image file missing: " + path);
        const bool png = bytes.size() >= 4 && bytes.compare(1, 3, "PNG") == 0;
        res.set_content(bytes, png ? "image/png" : "image/jpeg");
    });
    server.Get("/export.csv", [svc](const httplib::Request&, httplib::Response& res) {
        res.set_content(svc->export_csv(), "text/csv");
    });
}

int StudyService::Impl::bind(const std::string& host, int port) {
    const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("service: cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

int StudyService::start(const std::string& host, int port) {
    const int bound = impl_->bind(host, port);
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void StudyService::listen(const std::string& host, int port) {
    impl_->bind(host, port);
    impl_->server.listen_after_bind();
}

void StudyService::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id()) impl_->thread.join();
}

}  // namespace esiqa::service
