#include "haptix/service.hpp"

#include "httplib.h"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace haptix {

namespace {

using nlohmann::json;

int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

bool valid_id(const std::string& s) {
    return !s.empty() && s.size() <= 128 && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '-' || c == '.' || c == ':';
    });
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json rating_json(const StoredRating& r) {
    return {{"type", "rating"},
            {"caption_id", r.caption_id},
            {"signal_id", r.record.signal_id},
            {"category", to_string(r.record.category)},
            {"caption", r.record.caption},
            {"variant", to_string(r.record.variant)},
            {"rater_id", r.record.rater_id},
            {"rating", static_cast<int>(r.record.rating)},
            {"timestamp_ms", r.timestamp_ms}};
}

json card_json(const PoolCaption& c) {
    return {{"signal_id", c.signal_id},
            {"wav_url", "/signals/" + c.signal_id + ".wav"},
            {"category", to_string(c.category)},
            {"caption", c.caption},
            {"caption_id", c.caption_id}};
}

} // namespace

std::string to_jsonl(std::span<const PoolCaption> pool) {
    std::string out;
    for (const auto& c : pool) {
        json j{{"caption_id", c.caption_id},
               {"signal_id", c.signal_id},
               {"category", to_string(c.category)},
               {"caption", c.caption},
               {"variant", to_string(c.variant)}};
        out += j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    }
    return out;
}

std::vector<PoolCaption> pool_from_jsonl(const std::string& text) {
    std::vector<PoolCaption> out;
    std::istringstream in(text);
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = json::parse(line);
            out.push_back({j.at("caption_id").get<std::string>(), j.at("signal_id").get<std::string>(),
                           category_from_string(j.at("category").get<std::string>()),
                           j.at("caption").get<std::string>(),
                           tokenizer_kind_from_string(j.at("variant").get<std::string>())});
        } catch (const json::exception& e) {
            throw std::runtime_error("pool line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::vector<PoolCaption> read_pool(const std::filesystem::path& path) { return pool_from_jsonl(read_text(path)); }

std::vector<PoolCaption> synthetic_pool(std::span<const SignalEntry> signals, uint64_t seed, int per_variant) {
    if (per_variant < 1) {
        throw std::invalid_argument("per_variant must be positive");
    }
    Rng rng(seed);
    std::vector<PoolCaption> out;
    for (const auto& s : signals) {
        const auto f = extract_features(s.wave);
        for (auto c : kAllCategories) {
            auto options = all_captions(f, c);
            if (options.size() < static_cast<size_t>(2 * per_variant)) {
                throw std::invalid_argument("grammar too small for the requested pool");
            }
            rng.shuffle(options);
            size_t k = 0;
            for (auto v : {TokenizerKind::frequency, TokenizerKind::rvq}) {
                for (int i = 0; i < per_variant; ++i, ++k) {
                    out.push_back({s.signal_id + ":" + to_string(c) + ":" + to_string(v) + ":" + std::to_string(i),
                                   s.signal_id, c, options[k], v});
                }
            }
        }
    }
    return out;
}

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

StoreCorruption::StoreCorruption(size_t line, const std::string& what)
    : std::runtime_error("rating log corrupt at line " + std::to_string(line) + ": " + what), line_(line) {}

RatingLog::RatingLog(const std::filesystem::path& path, bool sync) : path_(path), sync_(sync) {
    if (std::filesystem::exists(path)) {
        const auto text = read_text(path);
        if (!text.empty() && text.back() != '\n') {
            throw StoreCorruption(static_cast<size_t>(std::count(text.begin(), text.end(), '\n')) + 1,
                                  "truncated record");
        }
        std::istringstream in(text);
        std::string line;
        size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            const auto tab = line.find('\t');
            if (tab != 16) {
                throw StoreCorruption(n, "missing checksum");
            }
            const std::string body = line.substr(17);
            if (hex64(fnv1a64(body)) != line.substr(0, 16)) {
                throw StoreCorruption(n, "checksum mismatch");
            }
            try {
                const auto j = json::parse(body);
                const auto type = j.at("type").get<std::string>();
                if (type == "session") {
                    sessions_.push_back({j.at("rater_id").get<std::string>(), j.at("block").get<int>()});
                } else if (type == "rating") {
                    StoredRating r;
                    r.caption_id = j.at("caption_id").get<std::string>();
                    r.record.signal_id = j.at("signal_id").get<std::string>();
                    r.record.category = category_from_string(j.at("category").get<std::string>());
                    r.record.caption = j.at("caption").get<std::string>();
                    r.record.variant = tokenizer_kind_from_string(j.at("variant").get<std::string>());
                    r.record.rater_id = j.at("rater_id").get<std::string>();
                    r.record.rating = j.at("rating").get<int>();
                    r.timestamp_ms = j.at("timestamp_ms").get<int64_t>();
                    ratings_.push_back(std::move(r));
                } else {
                    throw StoreCorruption(n, "unknown record type " + type);
                }
            } catch (const json::exception& e) {
                throw StoreCorruption(n, e.what());
            } catch (const std::invalid_argument& e) {
                throw StoreCorruption(n, e.what());
            }
        }
    }
    file_ = std::fopen(path.c_str(), "ab");
    if (!file_) {
        throw std::runtime_error("cannot open rating log " + path.string());
    }
}

RatingLog::~RatingLog() {
    if (file_) {
        std::fclose(file_);
    }
}

void RatingLog::write_line(const std::string& body) {
    const std::string line = hex64(fnv1a64(body)) + "\t" + body + "\n";
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
        throw std::runtime_error("write to rating log failed");
    }
    if (sync_ && ::fdatasync(fileno(file_)) != 0) {
        throw std::runtime_error("fdatasync on rating log failed");
    }
}

void RatingLog::append(const SessionEvent& e) {
    std::lock_guard lock(mu_);
    write_line(json{{"type", "session"}, {"rater_id", e.rater_id}, {"block", e.block}}.dump(-1, ' ', false, json::error_handler_t::replace));
    sessions_.push_back(e);
}

void RatingLog::append(const StoredRating& r) {
    std::lock_guard lock(mu_);
    write_line(rating_json(r).dump(-1, ' ', false, json::error_handler_t::replace));
    ratings_.push_back(r);
}

std::vector<SessionEvent> RatingLog::sessions() const {
    std::lock_guard lock(mu_);
    return sessions_;
}

std::vector<StoredRating> RatingLog::ratings() const {
    std::lock_guard lock(mu_);
    return ratings_;
}

RatingService::RatingService(std::vector<PoolCaption> pool, const CampaignConfig& cfg, RatingLog& log)
    : pool_(std::move(pool)), cfg_(cfg), log_(log) {
    if (cfg.signals_per_session < 1) {
        throw std::invalid_argument("signals_per_session must be positive");
    }
    if (pool_.empty()) {
        throw std::invalid_argument("caption pool is empty");
    }
    std::set<std::tuple<std::string, Category, std::string>> texts;
    for (size_t i = 0; i < pool_.size(); ++i) {
        const auto& c = pool_[i];
        if (!valid_id(c.caption_id) || !valid_id(c.signal_id)) {
            throw std::invalid_argument("invalid id in caption pool: " + c.caption_id);
        }
        if (!by_id_.emplace(c.caption_id, i).second) {
            throw std::invalid_argument("duplicate caption_id " + c.caption_id);
        }
        if (!texts.emplace(c.signal_id, c.category, c.caption).second) {
            throw std::invalid_argument("duplicate caption text for " + c.signal_id + ": " + c.caption);
        }
        by_signal_[c.signal_id].push_back(i);
    }
    std::vector<std::string> ids;
    for (const auto& [id, idx] : by_signal_) {
        ids.push_back(id);
    }
    Rng rng(cfg.seed);
    rng.shuffle(ids);
    for (size_t i = 0; i < ids.size(); i += static_cast<size_t>(cfg.signals_per_session)) {
        const size_t end = std::min(ids.size(), i + static_cast<size_t>(cfg.signals_per_session));
        blocks_.emplace_back(ids.begin() + static_cast<long>(i), ids.begin() + static_cast<long>(end));
    }

    for (const auto& e : log_.sessions()) {
        if (e.block < 0 || static_cast<size_t>(e.block) >= blocks_.size()) {
            throw std::invalid_argument("rating log does not match the caption pool");
        }
        sessions_.emplace(e.rater_id, build_session(e.rater_id, e.block));
    }
    for (const auto& r : log_.ratings()) {
        auto s = sessions_.find(r.record.rater_id);
        if (s == sessions_.end() || !by_id_.count(r.caption_id)) {
            throw std::invalid_argument("rating log does not match the caption pool");
        }
        rated_[{r.record.rater_id, r.caption_id}] = r.timestamp_ms;
        last_ts_[r.record.rater_id] = std::max(last_ts_[r.record.rater_id], r.timestamp_ms);
        ++s->second.completed;
    }
}

SessionAssignment RatingService::build_session(const std::string& rater_id, int block) const {
    SessionAssignment s;
    s.rater_id = rater_id;
    s.block = block;
    s.signal_ids = blocks_[static_cast<size_t>(block)];
    for (const auto& id : s.signal_ids) {
        const auto& idx = by_signal_.at(id);
        s.slots.insert(s.slots.end(), idx.begin(), idx.end());
    }
    Rng rng(cfg_.seed ^ fnv1a64(rater_id));
    rng.shuffle(s.slots);
    return s;
}

SessionAssignment& RatingService::session_locked(const std::string& rater_id, bool log_event) {
    if (!valid_id(rater_id)) {
        throw RatingRejected(400, "invalid rater_id");
    }
    auto it = sessions_.find(rater_id);
    if (it != sessions_.end()) {
        return it->second;
    }
    const int block = static_cast<int>(sessions_.size() % blocks_.size());
    if (log_event) {
        log_.append(SessionEvent{rater_id, block});
    }
    return sessions_.emplace(rater_id, build_session(rater_id, block)).first->second;
}

const SessionAssignment& RatingService::session(const std::string& rater_id) {
    std::lock_guard lock(mu_);
    return session_locked(rater_id, true);
}

std::optional<PoolCaption> RatingService::next(const std::string& rater_id) {
    std::lock_guard lock(mu_);
    const auto& s = session_locked(rater_id, true);
    for (size_t idx : s.slots) {
        if (!rated_.count({rater_id, pool_[idx].caption_id})) {
            return pool_[idx];
        }
    }
    return std::nullopt;
}

StoredRating RatingService::submit(const std::string& caption_id, const std::string& rater_id, int rating) {
    if (rating < 1 || rating > 7) {
        throw RatingRejected(400, "rating must be an integer in 1..7");
    }
    std::lock_guard lock(mu_);
    auto& s = session_locked(rater_id, true);
    const auto it = by_id_.find(caption_id);
    if (it == by_id_.end()) {
        throw RatingRejected(404, "unknown caption_id " + caption_id);
    }
    if (std::find(s.slots.begin(), s.slots.end(), it->second) == s.slots.end()) {
        throw RatingRejected(400, "caption " + caption_id + " is not assigned to rater " + rater_id);
    }
    if (rated_.count({rater_id, caption_id})) {
        throw RatingRejected(409, "caption " + caption_id + " already rated by " + rater_id);
    }
    const auto& c = pool_[it->second];
    StoredRating r;
    r.caption_id = caption_id;
    r.record = {c.signal_id, c.category, c.caption, c.variant, rater_id, static_cast<double>(rating)};
    auto last = last_ts_.find(rater_id);
    r.timestamp_ms = last == last_ts_.end() ? now_ms() : std::max(now_ms(), last->second + 1);
    log_.append(r);
    rated_[{rater_id, caption_id}] = r.timestamp_ms;
    last_ts_[rater_id] = r.timestamp_ms;
    ++s.completed;
    return r;
}

Progress RatingService::progress(const std::string& rater_id) {
    std::lock_guard lock(mu_);
    const auto& s = session_locked(rater_id, true);
    return {rater_id, s.block, s.completed, s.slots.size()};
}

std::vector<RatingRecord> RatingService::ratings() const {
    std::vector<RatingRecord> out;
    for (const auto& r : log_.ratings()) {
        out.push_back(r.record);
    }
    return out;
}

size_t RatingService::num_sessions() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

std::string export_preferences(std::span<const RatingRecord> ratings, const PairOptions& opts) {
    if (ratings.empty()) {
        return {};
    }
    const auto pairs = build_pairs(ratings, opts);
    return to_jsonl(pairs);
}

struct RatingServer::Impl {
    RatingService& service;
    ServerConfig cfg;
    httplib::Server server;
    std::thread thread;

    Impl(RatingService& s, ServerConfig c) : service(s), cfg(std::move(c)) {}
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
}

void send_download(httplib::Response& res, const std::string& body, const std::string& filename) {
    res.set_header("Content-Disposition", "attachment; filename=\"" + filename + "\"");
    res.set_content(body, "application/x-ndjson");
}

} // namespace

RatingServer::RatingServer(RatingService& service, ServerConfig cfg)
    : impl_(std::make_unique<Impl>(service, std::move(cfg))) {
    auto& srv = impl_->server;
    auto* impl = impl_.get();

    srv.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const RatingRejected& e) {
            send_error(res, e.status(), e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    });

    srv.Get(R"(/api/session/([^/]+)/next)", [impl](const httplib::Request& req, httplib::Response& res) {
        const auto card = impl->service.next(req.matches[1]);
        if (!card) {
            send_json(res, 200, json{{"done", true}});
            return;
        }
        send_json(res, 200, card_json(*card));
    });

    srv.Get(R"(/signals/([^/]+)\.wav)", [impl](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        const auto path = impl->cfg.signals_dir / (id + ".wav");
        if (!valid_id(id) || impl->cfg.signals_dir.empty() || !std::filesystem::exists(path)) {
            send_error(res, 404, "no such signal " + id);
            return;
        }
        res.set_content(read_text(path), "audio/wav");
    });

    srv.Post("/api/rating", [impl](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception&) {
            send_error(res, 400, "body is not valid JSON");
            return;
        }
        if (!body.is_object() || !body.contains("caption_id") || !body["caption_id"].is_string() ||
            !body.contains("rater_id") || !body["rater_id"].is_string() || !body.contains("rating") ||
            !body["rating"].is_number()) {
            send_error(res, 400, "expected {caption_id, rater_id, rating}");
            return;
        }
        const double v = body["rating"].get<double>();
        if (v != std::floor(v) || v < 1.0 || v > 7.0) {
            send_error(res, 400, "rating must be an integer in 1..7");
            return;
        }
        impl->service.submit(body["caption_id"].get<std::string>(), body["rater_id"].get<std::string>(),
                             static_cast<int>(v));
        send_json(res, 200, json{{"accepted", true}});
    });

    srv.Get("/api/export/ratings", [impl](const httplib::Request&, httplib::Response& res) {
        send_download(res, to_jsonl(std::span<const RatingRecord>(impl->service.ratings())), "ratings.jsonl");
    });

    srv.Get("/api/export/pairs", [impl](const httplib::Request&, httplib::Response& res) {
        const auto ratings = impl->service.ratings();
        send_download(res, export_preferences(ratings, impl->cfg.pairs), "pairs.jsonl");
    });

    srv.Get(R"(/api/progress/([^/]+))", [impl](const httplib::Request& req, httplib::Response& res) {
        const auto p = impl->service.progress(req.matches[1]);
        send_json(res, 200,
                  json{{"rater_id", p.rater_id},
                       {"block", p.block},
                       {"completed", p.completed},
                       {"total", p.total},
                       {"done", p.completed == p.total}});
    });

    if (!impl_->cfg.static_dir.empty() && !srv.set_mount_point("/", impl_->cfg.static_dir.string())) {
        throw std::runtime_error("static directory not found: " + impl_->cfg.static_dir.string());
    }
}

RatingServer::~RatingServer() { stop(); }

int RatingServer::bind() {
    auto& srv = impl_->server;
    if (impl_->cfg.port == 0) {
        port_ = srv.bind_to_any_port(impl_->cfg.host);
        if (port_ <= 0) {
            throw std::runtime_error("cannot bind " + impl_->cfg.host);
        }
    } else {
        if (!srv.bind_to_port(impl_->cfg.host, impl_->cfg.port)) {
            throw std::runtime_error("cannot bind " + impl_->cfg.host + ":" + std::to_string(impl_->cfg.port));
        }
        port_ = impl_->cfg.port;
    }
    return port_;
}

void RatingServer::listen() {
    if (port_ == 0) {
        bind();
    }
    impl_->server.listen_after_bind();
}

void RatingServer::start() {
    if (port_ == 0) {
        bind();
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void RatingServer::stop() {
    if (!impl_) {
        return;
    }
    impl_->server.stop();
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

} // namespace haptix
