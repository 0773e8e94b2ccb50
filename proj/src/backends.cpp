#include "cdsbench/backends.hpp"

#include "cdsbench/error.hpp"
#include "cdsbench/util.hpp"

#include <json.hpp>

#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

namespace cdsbench {

namespace {

using nlohmann::json;

// Appendix-style instruction templates, one per role x shot condition.
// These strings are load-bearing: run manifests embed their hashes and the
// golden-prompt tests pin the rendered bytes.
constexpr const char* kCaregiverZero =
    "[Conversation history {history}]\n"
    "You are the parent of a {month}-month-old English-speaking child. Now, you are having a "
    "conversation with your child. <SILENCE> indicates silence in the previous turn; "
    "<UNINTELLIGIBLE> indicates unintelligible speech. Based on the given conversation history "
    "above, give your response to parent input as ADULT. Do not output the speaker label.";

constexpr const char* kChildZero =
    "[Conversation history {history}]\n"
    "You are a {month}-month-old English-speaking child. Now, you are having a conversation "
    "with your parent. <SILENCE> indicates silence in the previous turn; <UNINTELLIGIBLE> "
    "indicates unintelligible speech. Based on the given conversation history above, give your "
    "response to parent input as CHI. Do not output the speaker label.";

constexpr const char* kCaregiverFew =
    "[Conversation history {history}]\n"
    "You are the parent of a {month}-month-old English-speaking child. Now, you are having a "
    "conversation with your child. <SILENCE> indicates silence in the previous turn; "
    "<UNINTELLIGIBLE> indicates unintelligible speech. Ensure your response is no longer than "
    "50 words regardless of the prompt. Here are some example interactions: {exemplars}. "
    "Follow the example interactions. Based on the given conversation history above, give your "
    "response to parent input as ADULT. Do not output the speaker label.";

constexpr const char* kChildFew =
    "[Conversation history {history}]\n"
    "You are a {month}-month-old English-speaking child. Now, you are having a conversation "
    "with your parent. <SILENCE> indicates silence in the previous turn; <UNINTELLIGIBLE> "
    "indicates unintelligible speech. Ensure your response is no longer than 6 words "
    "regardless of the prompt. Here are some example interactions: {exemplars}. Follow the "
    "example interactions. Based on the given conversation history above, give your response "
    "to parent input as CHI. Do not output the speaker label.";

std::string replace_all(std::string text, const std::string& marker, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(marker, pos)) != std::string::npos) {
        text.replace(pos, marker.size(), value);
        pos += value.size();
    }
    return text;
}

std::string render_turn(const Utterance& u) {
    return std::string(role_label(u.role)) + ": " + u.text();
}

struct EndpointParts {
    std::string host_port;
    std::string base_path;
};

EndpointParts split_endpoint(const std::string& endpoint) {
    std::string rest = endpoint;
    auto scheme = rest.find("://");
    std::string prefix;
    if (scheme != std::string::npos) {
        prefix = rest.substr(0, scheme + 3);
        rest = rest.substr(scheme + 3);
    } else {
        prefix = "http://";
    }
    auto slash = rest.find('/');
    EndpointParts parts;
    parts.host_port = prefix + (slash == std::string::npos ? rest : rest.substr(0, slash));
    parts.base_path = slash == std::string::npos ? "" : rest.substr(slash);
    if (!parts.base_path.empty() && parts.base_path.back() == '/') {
        parts.base_path.pop_back();
    }
    return parts;
}

}  // namespace

const char* shot_name(ShotSetting s) {
    return s == ShotSetting::Zero ? "zero" : "few";
}

ShotSetting shot_from_name(std::string_view name) {
    std::string n = to_lower(name);
    if (n == "zero") return ShotSetting::Zero;
    if (n == "few") return ShotSetting::Few;
    throw Error(ErrorCode::ConfigInvalid, "unknown shot setting '" + std::string(name) + "'");
}

std::string template_text(Role role, ShotSetting shots) {
    if (role == Role::Caregiver) {
        return shots == ShotSetting::Zero ? kCaregiverZero : kCaregiverFew;
    }
    return shots == ShotSetting::Zero ? kChildZero : kChildFew;
}

std::string template_id(Role role, ShotSetting shots) {
    return std::string(role_name(role)) + "." + shot_name(shots);
}

std::string template_hash(Role role, ShotSetting shots) {
    return to_hex(fnv1a64(template_text(role, shots)));
}

PromptSpec render_prompt(Role role_to_play, int age_months,
                         const std::vector<Utterance>& history, ShotSetting shots,
                         const std::vector<ExchangePair>& exemplars) {
    if (history.empty()) {
        throw Error(ErrorCode::ConfigInvalid, "prompt history must not be empty");
    }
    if (shots == ShotSetting::Few && exemplars.empty()) {
        throw Error(ErrorCode::MissingExemplars,
                    "few-shot prompt requested without exemplar pairs");
    }

    PromptSpec spec;
    spec.role_to_play = role_to_play;
    spec.age_months = age_months;
    spec.history = history;
    spec.exemplars = exemplars;
    spec.template_id = template_id(role_to_play, shots);
    spec.template_hash = template_hash(role_to_play, shots);

    std::string history_block;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (i) history_block += ", ";
        history_block += render_turn(history[i]);
    }

    std::string text = template_text(role_to_play, shots);
    text = replace_all(text, "{history}", history_block);
    text = replace_all(text, "{month}", std::to_string(age_months));
    if (shots == ShotSetting::Few) {
        // Adjacent pairs overlap (pair i's response is pair i+1's prompt);
        // render the covered turns once each.
        std::string exemplar_block;
        for (std::size_t i = 0; i < exemplars.size(); ++i) {
            bool contiguous =
                i > 0 && exemplars[i].pair_index == exemplars[i - 1].pair_index + 1;
            if (!contiguous) {
                if (i) exemplar_block += ", ";
                exemplar_block += render_turn(exemplars[i].prompt);
            }
            exemplar_block += ", " + render_turn(exemplars[i].response);
        }
        text = replace_all(text, "{exemplars}", exemplar_block);
    }
    spec.rendered_text = std::move(text);
    return spec;
}

std::string sanitize_completion(const std::string& raw, bool* flagged) {
    std::string text = trim(raw);
    bool was_flagged = false;
    for (const char* label : {"CHI:", "ADULT:"}) {
        if (text.rfind(label, 0) == 0) {
            text = trim(text.substr(std::string(label).size()));
            was_flagged = true;
            break;
        }
    }
    if (text.empty()) {
        text = kSilenceToken;
        was_flagged = true;
    }
    if (flagged) *flagged = was_flagged;
    return text;
}

std::string prompt_digest(const std::string& rendered_text) {
    // Length suffix guards against raw hash collisions between prompts of
    // different sizes.
    return to_hex(fnv1a64(rendered_text)) + "-" + std::to_string(rendered_text.size());
}

std::string BackendDescriptor::label() const {
    if (!id.empty()) return id;
    if (!model.empty()) return model;
    return kind;
}

void BackendDescriptor::validate() const {
    if (temperature < 0.0) {
        throw Error(ErrorCode::ConfigInvalid, "backend temperature must be >= 0");
    }
    if (kind == "http-chat") {
        if (endpoint.empty()) {
            throw Error(ErrorCode::ConfigInvalid, "http-chat backend requires an endpoint");
        }
    } else if (kind == "playback") {
        if (fixture_path.empty() || !std::filesystem::exists(fixture_path)) {
            throw Error(ErrorCode::ConfigInvalid,
                        "playback backend fixture missing: " + fixture_path);
        }
    } else if (kind == "fixed-script") {
        if (script.empty()) {
            throw Error(ErrorCode::ConfigInvalid, "fixed-script backend requires a script");
        }
    } else if (kind != "parrot") {
        throw Error(ErrorCode::ConfigInvalid, "unknown backend kind '" + kind + "'");
    }
    if (max_concurrency < 1) {
        throw Error(ErrorCode::ConfigInvalid, "backend max_concurrency must be >= 1");
    }
}

PlaybackFixture PlaybackFixture::load(const std::string& path) {
    PlaybackFixture fixture;
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& ex) {
            throw Error(ErrorCode::IoError,
                        path + " line " + std::to_string(lineno) + ": " + ex.what());
        }
        Entry entry;
        entry.prompt_len = rec.value("prompt_len", std::size_t{0});
        entry.completion = rec.at("completion").get<std::string>();
        fixture.entries_[rec.at("digest").get<std::string>()] = std::move(entry);
    }
    return fixture;
}

void PlaybackFixture::add(const std::string& rendered_prompt, const std::string& completion) {
    Entry entry;
    entry.prompt_len = rendered_prompt.size();
    entry.completion = completion;
    entries_[prompt_digest(rendered_prompt)] = std::move(entry);
}

std::optional<std::string> PlaybackFixture::lookup(const std::string& rendered_prompt) const {
    auto it = entries_.find(prompt_digest(rendered_prompt));
    if (it == entries_.end()) return std::nullopt;
    return it->second.completion;
}

void PlaybackFixture::save(const std::string& path) const {
    std::string out;
    for (const auto& [digest, entry] : entries_) {
        json rec;
        rec["digest"] = digest;
        rec["prompt_len"] = entry.prompt_len;
        rec["completion"] = entry.completion;
        out += rec.dump();
        out.push_back('\n');
    }
    write_text_file(path, out);
}

// Counting gate capping in-flight completions per backend.
class ConcurrencyGate {
public:
    explicit ConcurrencyGate(int limit) : available_(limit) {}

    void enter() {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
    }
    void leave() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            ++available_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int available_;
};

namespace {

class GateScope {
public:
    explicit GateScope(ConcurrencyGate* gate) : gate_(gate) {
        if (gate_) gate_->enter();
    }
    ~GateScope() {
        if (gate_) gate_->leave();
    }
    GateScope(const GateScope&) = delete;
    GateScope& operator=(const GateScope&) = delete;

private:
    ConcurrencyGate* gate_;
};

CompletionResult finish(const BackendDescriptor& desc, const std::string& raw_text,
                        std::chrono::steady_clock::time_point start, int attempts) {
    CompletionResult result;
    bool flagged = false;
    result.text = sanitize_completion(raw_text, &flagged);
    result.refusal_flag = flagged;
    result.backend_id = desc.label();
    result.attempts = attempts;
    result.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    return result;
}

class ParrotBackend final : public ChatBackend {
public:
    explicit ParrotBackend(BackendDescriptor desc) : desc_(std::move(desc)) {}

    CompletionResult complete(const PromptSpec& prompt) override {
        auto start = std::chrono::steady_clock::now();
        // Echo the interlocutor's last turn verbatim.
        return finish(desc_, prompt.history.back().text(), start, 1);
    }
    const BackendDescriptor& descriptor() const override { return desc_; }

private:
    BackendDescriptor desc_;
};

class FixedScriptBackend final : public ChatBackend {
public:
    explicit FixedScriptBackend(BackendDescriptor desc) : desc_(std::move(desc)) {}

    CompletionResult complete(const PromptSpec&) override {
        auto start = std::chrono::steady_clock::now();
        const std::string& reply = desc_.script[next_ % desc_.script.size()];
        ++next_;
        return finish(desc_, reply, start, 1);
    }
    const BackendDescriptor& descriptor() const override { return desc_; }

private:
    BackendDescriptor desc_;
    std::size_t next_ = 0;
};

class PlaybackBackend final : public ChatBackend {
public:
    PlaybackBackend(BackendDescriptor desc, std::shared_ptr<const PlaybackFixture> fixture)
        : desc_(std::move(desc)), fixture_(std::move(fixture)) {}

    CompletionResult complete(const PromptSpec& prompt) override {
        auto start = std::chrono::steady_clock::now();
        auto completion = fixture_->lookup(prompt.rendered_text);
        if (!completion) {
            throw Error(ErrorCode::PlaybackMiss,
                        "no fixture entry for digest " + prompt_digest(prompt.rendered_text) +
                            " (" + desc_.fixture_path + ")");
        }
        return finish(desc_, *completion, start, 1);
    }
    const BackendDescriptor& descriptor() const override { return desc_; }

private:
    BackendDescriptor desc_;
    std::shared_ptr<const PlaybackFixture> fixture_;
};

class HttpChatBackend final : public ChatBackend {
public:
    HttpChatBackend(BackendDescriptor desc, std::shared_ptr<ConcurrencyGate> gate)
        : desc_(std::move(desc)), gate_(std::move(gate)) {}

    CompletionResult complete(const PromptSpec& prompt) override {
        GateScope scope(gate_.get());
        auto start = std::chrono::steady_clock::now();

        json body;
        body["model"] = desc_.model;
        body["messages"] = json::array({json{{"role", "user"}, {"content", prompt.rendered_text}}});
        body["temperature"] = desc_.temperature;

        EndpointParts parts = split_endpoint(desc_.endpoint);
        httplib::Client client(parts.host_port);
        client.set_connection_timeout(desc_.timeout_ms / 1000, (desc_.timeout_ms % 1000) * 1000);
        client.set_read_timeout(desc_.timeout_ms / 1000, (desc_.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!desc_.api_key_env.empty()) {
            if (const char* token = std::getenv(desc_.api_key_env.c_str())) {
                headers.emplace("Authorization", std::string("Bearer ") + token);
            }
        }

        std::string last_error;
        double backoff = desc_.retry.initial_backoff_ms;
        int attempts = 0;
        while (attempts <= desc_.retry.max_retries) {
            if (attempts > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(static_cast<int>(backoff)));
                backoff *= desc_.retry.multiplier;
            }
            ++attempts;
            auto res = client.Post(parts.base_path + "/chat/completions", headers, body.dump(),
                                   "application/json");
            if (!res) {
                last_error = "transport failure (" + httplib::to_string(res.error()) + ")";
                continue;
            }
            if (res->status >= 500 || res->status == 429) {
                last_error = "status " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) {
                throw Error(ErrorCode::BackendExhausted,
                            desc_.label() + ": non-retryable status " +
                                std::to_string(res->status) + " after " +
                                std::to_string(attempts) + " attempt(s)");
            }
            std::string text;
            try {
                json reply = json::parse(res->body);
                text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const json::exception& ex) {
                throw Error(ErrorCode::BackendExhausted,
                            desc_.label() + ": malformed completion payload: " + ex.what());
            }
            return finish(desc_, text, start, attempts);
        }
        throw Error(ErrorCode::BackendExhausted,
                    desc_.label() + ": retries exhausted after " + std::to_string(attempts) +
                        " attempt(s), last: " + last_error);
    }
    const BackendDescriptor& descriptor() const override { return desc_; }

private:
    BackendDescriptor desc_;
    std::shared_ptr<ConcurrencyGate> gate_;
};

// Forwards to the inner backend, capturing every prompt/completion pair.
class RecordingBackend final : public ChatBackend {
public:
    RecordingBackend(std::unique_ptr<ChatBackend> inner, std::shared_ptr<RecorderSink> sink)
        : inner_(std::move(inner)), sink_(std::move(sink)) {}

    CompletionResult complete(const PromptSpec& prompt) override {
        CompletionResult result = inner_->complete(prompt);
        sink_->add(prompt.rendered_text, result.text);
        return result;
    }
    const BackendDescriptor& descriptor() const override { return inner_->descriptor(); }

private:
    std::unique_ptr<ChatBackend> inner_;
    std::shared_ptr<RecorderSink> sink_;
};

}  // namespace

void RecorderSink::add(const std::string& rendered_prompt, const std::string& completion) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::string digest = prompt_digest(rendered_prompt);
    auto [it, inserted] = digest_to_prompt_.emplace(digest, rendered_prompt);
    if (!inserted && it->second != rendered_prompt) {
        throw Error(ErrorCode::DigestCollision,
                    "distinct prompts share digest " + digest + "; refusing to record");
    }
    fixture_.add(rendered_prompt, completion);
}

void RecorderSink::save(const std::string& path) const {
    std::lock_guard<std::mutex> lock(mutex_);
    fixture_.save(path);
}

std::size_t RecorderSink::size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return fixture_.size();
}

PlaybackFixture RecorderSink::snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return fixture_;
}

BackendPool::BackendPool(BackendDescriptor desc) : desc_(std::move(desc)) {
    desc_.validate();
    if (desc_.kind == "http-chat") {
        gate_ = std::make_shared<ConcurrencyGate>(desc_.max_concurrency);
    } else if (desc_.kind == "playback") {
        fixture_ = std::make_shared<PlaybackFixture>(PlaybackFixture::load(desc_.fixture_path));
    }
}

std::unique_ptr<ChatBackend> BackendPool::acquire() const {
    std::unique_ptr<ChatBackend> backend;
    if (desc_.kind == "parrot") {
        backend = std::make_unique<ParrotBackend>(desc_);
    } else if (desc_.kind == "fixed-script") {
        backend = std::make_unique<FixedScriptBackend>(desc_);
    } else if (desc_.kind == "playback") {
        backend = std::make_unique<PlaybackBackend>(desc_, fixture_);
    } else {
        backend = std::make_unique<HttpChatBackend>(desc_, gate_);
    }
    if (recorder_) {
        backend = std::make_unique<RecordingBackend>(std::move(backend), recorder_);
    }
    return backend;
}

}  // namespace cdsbench
