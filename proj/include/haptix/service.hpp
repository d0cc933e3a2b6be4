#pragma once

#include "haptix/corpus.hpp"
#include "haptix/dpo.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace haptix {

// A caption offered to raters. caption_id is unique within a pool.
struct PoolCaption {
    std::string caption_id;
    std::string signal_id;
    Category category = Category::sensory;
    std::string caption;
    TokenizerKind variant = TokenizerKind::frequency;

    bool operator==(const PoolCaption&) const = default;
};

std::string to_jsonl(std::span<const PoolCaption> pool);
std::vector<PoolCaption> pool_from_jsonl(const std::string& text);
std::vector<PoolCaption> read_pool(const std::filesystem::path& path);

// Stand-in for model generations: per_variant distinct grammar captions for
// each (signal, category, variant), drawn from the signal's features.
std::vector<PoolCaption> synthetic_pool(std::span<const SignalEntry> signals, uint64_t seed, int per_variant = 2);

uint64_t fnv1a64(std::string_view bytes);

class StoreCorruption : public std::runtime_error {
public:
    StoreCorruption(size_t line, const std::string& what);
    size_t line() const { return line_; }

private:
    size_t line_;
};

struct StoredRating {
    RatingRecord record;
    std::string caption_id;
    int64_t timestamp_ms = 0;

    bool operator==(const StoredRating&) const = default;
};

struct SessionEvent {
    std::string rater_id;
    int block = 0;
};

// Append-only log. Each line is "<fnv1a64 hex>\t<json>"; opening an existing
// log replays it and throws StoreCorruption on a checksum or syntax mismatch.
class RatingLog {
public:
    explicit RatingLog(const std::filesystem::path& path, bool sync = true);
    ~RatingLog();
    RatingLog(const RatingLog&) = delete;
    RatingLog& operator=(const RatingLog&) = delete;

    void append(const SessionEvent& e);
    void append(const StoredRating& r);

    std::vector<SessionEvent> sessions() const;
    std::vector<StoredRating> ratings() const;
    const std::filesystem::path& path() const { return path_; }

private:
    void write_line(const std::string& json);

    std::filesystem::path path_;
    bool sync_;
    std::FILE* file_ = nullptr;
    mutable std::mutex mu_;
    std::vector<SessionEvent> sessions_;
    std::vector<StoredRating> ratings_;
};

struct CampaignConfig {
    int signals_per_session = 32;
    uint64_t seed = 0;
};

struct SessionAssignment {
    std::string rater_id;
    int block = 0;
    std::vector<std::string> signal_ids;
    std::vector<size_t> slots;  // pool indices in presentation order
    size_t completed = 0;

    bool complete() const { return completed == slots.size(); }
};

struct Progress {
    std::string rater_id;
    int block = 0;
    size_t completed = 0;
    size_t total = 0;
};

// Thrown by RatingService::submit; status is the HTTP code it maps to.
class RatingRejected : public std::runtime_error {
public:
    RatingRejected(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

// Rater k in order of first contact rates block k mod num_blocks; blocks are
// consecutive chunks of a seeded shuffle of the pool's signals.
class RatingService {
public:
    RatingService(std::vector<PoolCaption> pool, const CampaignConfig& cfg, RatingLog& log);

    const SessionAssignment& session(const std::string& rater_id);
    std::optional<PoolCaption> next(const std::string& rater_id);
    StoredRating submit(const std::string& caption_id, const std::string& rater_id, int rating);
    Progress progress(const std::string& rater_id);

    std::vector<RatingRecord> ratings() const;
    size_t num_blocks() const { return blocks_.size(); }
    size_t num_sessions() const;
    const std::vector<PoolCaption>& pool() const { return pool_; }

private:
    SessionAssignment& session_locked(const std::string& rater_id, bool log_event);
    SessionAssignment build_session(const std::string& rater_id, int block) const;

    std::vector<PoolCaption> pool_;
    CampaignConfig cfg_;
    RatingLog& log_;
    std::map<std::string, size_t> by_id_;
    std::map<std::string, std::vector<size_t>> by_signal_;
    std::vector<std::vector<std::string>> blocks_;
    std::map<std::string, SessionAssignment> sessions_;
    std::map<std::pair<std::string, std::string>, int64_t> rated_;  // (rater, caption_id) -> timestamp
    std::map<std::string, int64_t> last_ts_;
    mutable std::mutex mu_;
};

std::string export_preferences(std::span<const RatingRecord> ratings, const PairOptions& opts = {});

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    std::filesystem::path signals_dir;
    std::filesystem::path static_dir;  // optional
    PairOptions pairs;
};

class RatingServer {
public:
    RatingServer(RatingService& service, ServerConfig cfg);
    ~RatingServer();

    // Binds the socket; throws on failure. Returns the bound port.
    int bind();
    void listen();  // blocks until stop()
    void start();   // listen() on a background thread
    void stop();
    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

} // namespace haptix
