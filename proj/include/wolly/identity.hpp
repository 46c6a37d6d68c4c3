#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "httplib.h"
#include "wolly/emotion.hpp"

namespace wolly::identity {

struct IdentityError : std::runtime_error {
    enum class Kind { DimensionMismatch, StorageError, UnknownProfile, InvalidProfile };
    IdentityError(Kind kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
    Kind kind;
};

struct EmotionEntry {
    std::int64_t timestamp_ms = 0;
    std::vector<std::string> categories;
    emotion::Vad vad{};

    friend bool operator==(const EmotionEntry&, const EmotionEntry&) = default;
};

struct UserProfile {
    std::string id;
    std::string name;
    unsigned age = 0;
    std::vector<double> embedding;
    std::optional<std::string> picture_ref;
    std::vector<std::string> interests;  // insertion order, no duplicates
    std::vector<EmotionEntry> emotion_log;

    friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

struct MatchResult {
    /// Set iff the nearest profile lies within the threshold.
    std::optional<std::string> profile_id;
    double distance = 0.0;  // to the nearest profile, when there is one

    bool known() const noexcept { return profile_id.has_value(); }
};

struct RegistryOptions {
    std::size_t dimension = 128;
    double match_threshold = 0.6;
    /// Appended records after which the file is rewritten; 0 disables.
    std::size_t compact_after = 512;
    std::function<std::int64_t()> clock;  // ms since epoch; system clock when unset
};

/// Face-embedding registry. With a file, every mutation is appended as one
/// JSON line and synced before returning. Reads take a shared lock; writes are
/// exclusive.
class Registry {
public:
    explicit Registry(std::optional<std::filesystem::path> file = std::nullopt, RegistryOptions options = {});
    ~Registry();
    Registry(const Registry&) = delete;
    Registry& operator=(const Registry&) = delete;

    std::string enroll(const std::string& name, unsigned age, std::span<const double> embedding,
                       std::optional<std::string> picture_ref = std::nullopt);

    /// Euclidean nearest neighbour; Known iff distance <= threshold. Equal
    /// distances resolve to the earliest enrollment.
    MatchResult recognize(std::span<const double> embedding) const;
    MatchResult recognize(std::span<const double> embedding, double threshold) const;

    /// Appends new interests (deduplicated) and, when given, one emotion entry
    /// stamped with the registry clock.
    void record_interaction(const std::string& profile_id, const std::vector<std::string>& interests_delta,
                            const std::optional<EmotionEntry>& emotion = std::nullopt);

    std::optional<UserProfile> get(const std::string& profile_id) const;
    std::vector<UserProfile> profiles() const;  // enrollment order
    std::size_t size() const;
    const RegistryOptions& options() const noexcept { return options_; }

    /// Rewrites the file as one "profile" record per user (temp file + rename).
    void compact();

    /// The compacted file content, whether or not a file is attached.
    std::string snapshot_text() const;

private:
    void load();
    void apply_line(const std::string& line, std::size_t line_no);
    void append(const std::string& line);
    void maybe_compact();
    void check_dimension(std::span<const double> e) const;
    std::string snapshot_locked() const;
    void compact_locked();
    std::int64_t now() const;

    std::optional<std::filesystem::path> file_;
    RegistryOptions options_;
    mutable std::shared_mutex mu_;
    std::vector<UserProfile> profiles_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<double> matrix_;  // row-major embeddings, enrollment order
    std::uint64_t next_id_ = 1;
    std::size_t appended_ = 0;
    std::FILE* out_ = nullptr;
};

/// POST /identity/enroll, POST /identity/recognize, POST /identity/interaction,
/// GET /identity/{id}.
void mount_identity_routes(httplib::Server& server, Registry& registry);

}  // namespace wolly::identity
