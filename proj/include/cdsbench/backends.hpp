#pragma once

#include "cdsbench/corpus.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace cdsbench {

enum class ShotSetting { Zero, Few };

const char* shot_name(ShotSetting s);
ShotSetting shot_from_name(std::string_view name);

struct PromptSpec {
    Role role_to_play = Role::Caregiver;
    int age_months = 0;
    std::vector<Utterance> history;       // chronological; interlocutor last
    std::vector<ExchangePair> exemplars;  // few-shot only
    std::string rendered_text;
    std::string template_id;
    std::string template_hash;
};

// Raw template text (with {month}/{history}/{exemplars} placeholders) and
// its stable identifiers. A hash changes iff the template text changes.
std::string template_text(Role role, ShotSetting shots);
std::string template_id(Role role, ShotSetting shots);
std::string template_hash(Role role, ShotSetting shots);

// Byte-exact instantiation. History must be non-empty (a single utterance
// is the single-turn variant). Few-shot requires exemplars.
PromptSpec render_prompt(Role role_to_play, int age_months,
                         const std::vector<Utterance>& history, ShotSetting shots,
                         const std::vector<ExchangePair>& exemplars = {});

struct RetryPolicy {
    int max_retries = 3;
    int initial_backoff_ms = 250;
    double multiplier = 2.0;
};

struct BackendDescriptor {
    std::string kind = "parrot";  // http-chat | playback | parrot | fixed-script
    std::string id;               // reporting label; defaults to kind/model
    std::string endpoint;
    std::string model;
    double temperature = 1.0;  // paper default sampling temperature
    int max_concurrency = 1;
    int timeout_ms = 30000;
    RetryPolicy retry;
    std::string fixture_path;         // playback input / recording output
    std::vector<std::string> script;  // fixed-script replies, cycled
    std::string api_key_env;          // env var holding the bearer token

    std::string label() const;
    void validate() const;  // temperature >= 0, playback fixture exists, ...
};

struct CompletionResult {
    std::string text;  // sanitized, never empty (<SILENCE> when blank)
    double latency_ms = 0.0;
    std::string backend_id;
    int attempts = 1;
    bool refusal_flag = false;  // empty or speaker-labeled reply was sanitized
};

// Strips one leading CHI:/ADULT: label and outer whitespace; interior text
// is never altered. Blank results become <SILENCE>.
std::string sanitize_completion(const std::string& raw, bool* flagged = nullptr);

std::string prompt_digest(const std::string& rendered_text);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual CompletionResult complete(const PromptSpec& prompt) = 0;
    virtual const BackendDescriptor& descriptor() const = 0;
};

// Digest -> completion map enabling offline reruns. Line-delimited JSON
// records {"digest","prompt_len","completion"}.
class PlaybackFixture {
public:
    static PlaybackFixture load(const std::string& path);

    void add(const std::string& rendered_prompt, const std::string& completion);
    std::optional<std::string> lookup(const std::string& rendered_prompt) const;
    std::size_t size() const { return entries_.size(); }
    void save(const std::string& path) const;

private:
    struct Entry {
        std::size_t prompt_len = 0;
        std::string completion;
    };
    std::map<std::string, Entry> entries_;  // ordered: stable fixture files
};

// Thread-safe digest -> completion collector shared by every backend
// instance of a recorded session; distinct prompts mapping to one digest
// abort the recording.
class RecorderSink {
public:
    void add(const std::string& rendered_prompt, const std::string& completion);
    void save(const std::string& path) const;
    std::size_t size() const;
    PlaybackFixture snapshot() const;

private:
    mutable std::mutex mutex_;
    PlaybackFixture fixture_;
    std::map<std::string, std::string> digest_to_prompt_;
};

// Creates per-conversation backend instances that share one concurrency
// limiter (and recorder, when attached), so fixed-script state stays
// conversation-local while global backend caps still hold.
class BackendPool {
public:
    explicit BackendPool(BackendDescriptor desc);
    std::unique_ptr<ChatBackend> acquire() const;
    const BackendDescriptor& descriptor() const { return desc_; }
    void attach_recorder(std::shared_ptr<RecorderSink> sink) { recorder_ = std::move(sink); }

private:
    BackendDescriptor desc_;
    std::shared_ptr<class ConcurrencyGate> gate_;
    std::shared_ptr<const PlaybackFixture> fixture_;  // playback kind only
    std::shared_ptr<RecorderSink> recorder_;
};

}  // namespace cdsbench
