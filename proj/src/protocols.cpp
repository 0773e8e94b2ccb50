#include "cdsbench/protocols.hpp"

#include "cdsbench/error.hpp"
#include "cdsbench/json_io.hpp"
#include "cdsbench/util.hpp"

#include <json.hpp>

#include <atomic>
#include <mutex>
#include <thread>

namespace cdsbench {

namespace {

using nlohmann::json;

void log_line(const RunOptions& options, const std::string& message) {
    if (options.log) options.log(message);
}

// Runs fn(i) for i in [0, n) over `workers` threads; exceptions propagate.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    int count = std::min<int>(workers, static_cast<int>(n));
    threads.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<ExchangePair> exemplars_for(const Conversation& conv, ShotSetting shots, int k,
                                        const RunOptions& options) {
    if (shots != ShotSetting::Few || k <= 0) return {};
    int pairs = static_cast<int>(conv.utterances.size()) - 1;
    int k_eff = std::min(k, pairs);
    if (k_eff < k) {
        log_line(options, conv.id + ": only " + std::to_string(k_eff) + " of " +
                              std::to_string(k) + " exemplar pairs available");
    }
    return extract_exemplars(conv, k_eff);
}

}  // namespace

const char* direction_name(Direction d) {
    switch (d) {
        case Direction::ChildToCaregiver: return "child-to-caregiver";
        case Direction::CaregiverToChild: return "caregiver-to-child";
        case Direction::Both: return "both";
    }
    return "unknown";
}

Direction direction_from_name(std::string_view name) {
    std::string n = to_lower(name);
    if (n == "child-to-caregiver") return Direction::ChildToCaregiver;
    if (n == "caregiver-to-child") return Direction::CaregiverToChild;
    if (n == "both") return Direction::Both;
    throw Error(ErrorCode::ConfigInvalid, "unknown direction '" + std::string(name) + "'");
}

Role prompt_role(Direction d) {
    if (d == Direction::Both) {
        throw Error(ErrorCode::ConfigInvalid, "direction 'both' has no single prompt role");
    }
    return d == Direction::ChildToCaregiver ? Role::Child : Role::Caregiver;
}

std::string RunManifest::to_json() const {
    json j;
    j["protocol"] = protocol;
    j["direction"] = direction;
    j["shots"] = shot_name(shots);
    json backend_obj = json::object();
    for (const auto& [role, desc] : backends) backend_obj[role] = backend_to_json(desc);
    j["backends"] = backend_obj;
    j["template_hashes"] = template_hashes;
    j["embedder"] = provider_to_json(embedder);
    j["parser"] = provider_to_json(parser);
    j["seed"] = seed;
    j["max_turns"] = max_turns;
    j["exemplar_count"] = exemplar_count;
    j["excluded_exemplar_pairs"] = excluded_exemplar_pairs;
    j["timestamp"] = timestamp;
    j["toolkit_version"] = toolkit_version;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    json j = json::parse(text);
    RunManifest m;
    m.protocol = j.value("protocol", "");
    m.direction = j.value("direction", "");
    m.shots = shot_from_name(j.value("shots", "zero"));
    if (j.contains("backends")) {
        for (const auto& [role, desc] : j.at("backends").items()) {
            m.backends[role] = backend_from_json(desc);
        }
    }
    if (j.contains("template_hashes")) {
        m.template_hashes =
            j.at("template_hashes").get<std::map<std::string, std::string>>();
    }
    if (j.contains("embedder")) m.embedder = provider_from_json(j.at("embedder"));
    if (j.contains("parser")) m.parser = provider_from_json(j.at("parser"));
    m.seed = j.value("seed", std::uint64_t{0});
    m.max_turns = j.value("max_turns", 300);
    m.exemplar_count = j.value("exemplar_count", 3);
    if (j.contains("excluded_exemplar_pairs")) {
        m.excluded_exemplar_pairs =
            j.at("excluded_exemplar_pairs").get<std::vector<int>>();
    }
    m.timestamp = j.value("timestamp", "");
    m.toolkit_version = j.value("toolkit_version", "");
    return m;
}

std::string RunManifest::digest() const {
    RunManifest copy = *this;
    copy.timestamp.clear();
    return to_hex(fnv1a64(copy.to_json()));
}

std::string RunManifest::configuration_tag(Role generated_role) const {
    std::string backend_label = "?";
    auto it = backends.find(role_name(generated_role));
    if (it != backends.end()) backend_label = it->second.label();
    return backend_label + ":" + shot_name(shots) + ":" + protocol + ":" +
           role_name(generated_role);
}

std::vector<ExchangePair> extract_exemplars(const Conversation& conv, int k) {
    if (k < 0) {
        throw Error(ErrorCode::ConfigInvalid, "exemplar count must be >= 0");
    }
    if (k == 0) return {};
    int pairs = static_cast<int>(conv.utterances.size()) - 1;
    if (pairs < k) {
        throw Error(ErrorCode::TooShort, "conversation " + conv.id + " has " +
                                             std::to_string(pairs) + " pair(s), need " +
                                             std::to_string(k));
    }
    std::vector<ExchangePair> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        ExchangePair pair;
        pair.prompt = conv.utterances[static_cast<std::size_t>(i)];
        pair.response = conv.utterances[static_cast<std::size_t>(i) + 1];
        pair.conversation_id = conv.id;
        pair.pair_index = i;
        out.push_back(std::move(pair));
    }
    return out;
}

namespace {

std::map<std::string, std::string> all_template_hashes() {
    std::map<std::string, std::string> hashes;
    for (Role role : {Role::Child, Role::Caregiver}) {
        for (ShotSetting shots : {ShotSetting::Zero, ShotSetting::Few}) {
            hashes[template_id(role, shots)] = template_hash(role, shots);
        }
    }
    return hashes;
}

// One direction of single-turn generation for one reference conversation.
std::optional<GeneratedConversation> generate_single_turn(const Conversation& ref,
                                                          ChatBackend& backend,
                                                          Direction direction,
                                                          ShotSetting shots,
                                                          const RunOptions& options) {
    const Role prompter = prompt_role(direction);
    const Role responder = opposite(prompter);
    std::vector<ExchangePair> exemplars =
        exemplars_for(ref, shots, options.exemplar_count, options);
    const int excluded_below =
        shots == ShotSetting::Few ? static_cast<int>(exemplars.size()) : 0;

    GeneratedConversation gen;
    gen.reference_id = ref.id;
    gen.generated_roles = {responder};
    gen.conversation.id = ref.id + "#gen-" + role_name(responder);
    gen.conversation.age_months = ref.age_months;
    gen.conversation.source = ConversationSource::Generated;

    for (std::size_t i = 0; i + 1 < ref.utterances.size(); ++i) {
        const Utterance& prompt_utt = ref.utterances[i];
        if (prompt_utt.role != prompter) continue;
        if (static_cast<int>(i) < excluded_below) continue;  // exemplar pair

        // Single-turn variant: the history is just the prompt utterance.
        PromptSpec spec = render_prompt(responder, ref.age_months, {prompt_utt}, shots,
                                        exemplars);
        std::string reply_text;
        try {
            reply_text = backend.complete(spec).text;
        } catch (const Error& ex) {
            log_line(options, ref.id + " pair " + std::to_string(i) + ": " + ex.what());
            reply_text = kSilenceToken;  // flagged silence, run continues
            gen.truncated = true;
        }
        int base = static_cast<int>(gen.conversation.utterances.size());
        Utterance prompt_copy = prompt_utt;
        prompt_copy.index = base;
        gen.conversation.utterances.push_back(std::move(prompt_copy));
        gen.conversation.utterances.push_back(
            normalize_utterance(reply_text, responder, base + 1));
    }
    if (gen.conversation.utterances.empty()) {
        log_line(options, ref.id + ": no eligible pairs for direction " +
                              direction_name(direction) + "; nothing generated");
        return std::nullopt;
    }
    return gen;
}

}  // namespace

GeneratedCorpus run_single_turn(const BenchmarkSet& set, const BackendPool& child_backend,
                                const BackendPool& caregiver_backend, Direction direction,
                                ShotSetting shots, const RunOptions& options) {
    std::vector<Direction> directions;
    if (direction == Direction::Both) {
        directions = {Direction::ChildToCaregiver, Direction::CaregiverToChild};
    } else {
        directions = {direction};
    }

    GeneratedCorpus corpus;
    corpus.manifest.protocol = "single";
    corpus.manifest.direction = direction_name(direction);
    corpus.manifest.shots = shots;
    corpus.manifest.max_turns = 0;
    corpus.manifest.exemplar_count = options.exemplar_count;
    if (shots == ShotSetting::Few) {
        for (int i = 0; i < options.exemplar_count; ++i) {
            corpus.manifest.excluded_exemplar_pairs.push_back(i);
        }
    }
    corpus.manifest.template_hashes = all_template_hashes();
    for (Direction d : directions) {
        Role responder = opposite(prompt_role(d));
        const BackendPool& pool =
            responder == Role::Child ? child_backend : caregiver_backend;
        corpus.manifest.backends[role_name(responder)] = pool.descriptor();
    }

    std::vector<std::vector<GeneratedConversation>> results(set.conversations.size());
    parallel_for(set.conversations.size(), options.workers, [&](std::size_t i) {
        const Conversation& ref = set.conversations[i];
        if (options.already_done && options.already_done(ref.id)) return;
        std::vector<GeneratedConversation> batch;
        for (Direction d : directions) {
            Role responder = opposite(prompt_role(d));
            std::unique_ptr<ChatBackend> backend =
                (responder == Role::Child ? child_backend : caregiver_backend).acquire();
            if (auto gen = generate_single_turn(ref, *backend, d, shots, options)) {
                batch.push_back(std::move(*gen));
            }
        }
        if (options.on_reference_complete) options.on_reference_complete(ref.id, batch);
        results[i] = std::move(batch);
    });
    for (auto& batch : results) {
        for (auto& gen : batch) {
            corpus.conversations.push_back(std::move(gen));
        }
    }
    return corpus;
}

GeneratedCorpus run_multi_turn(const BenchmarkSet& set, const BackendPool& child_backend,
                               const BackendPool& caregiver_backend, ShotSetting shots,
                               int max_turns, const RunOptions& options) {
    GeneratedCorpus corpus;
    corpus.manifest.protocol = "multi";
    corpus.manifest.shots = shots;
    corpus.manifest.max_turns = max_turns;
    corpus.manifest.exemplar_count = options.exemplar_count;
    corpus.manifest.template_hashes = all_template_hashes();
    corpus.manifest.backends[role_name(Role::Child)] = child_backend.descriptor();
    corpus.manifest.backends[role_name(Role::Caregiver)] = caregiver_backend.descriptor();

    std::vector<std::optional<GeneratedConversation>> results(set.conversations.size());
    parallel_for(set.conversations.size(), options.workers, [&](std::size_t i) {
        const Conversation& ref = set.conversations[i];
        if (ref.utterances.empty()) return;
        if (options.already_done && options.already_done(ref.id)) return;

        std::vector<ExchangePair> exemplars =
            exemplars_for(ref, shots, options.exemplar_count, options);
        std::unique_ptr<ChatBackend> child = child_backend.acquire();
        std::unique_ptr<ChatBackend> caregiver = caregiver_backend.acquire();

        GeneratedConversation gen;
        gen.reference_id = ref.id;
        gen.generated_roles = {Role::Child, Role::Caregiver};
        gen.conversation.id = ref.id + "#gen";
        gen.conversation.age_months = ref.age_months;
        gen.conversation.source = ConversationSource::Generated;

        // Seed with the reference conversation's opening turn, same role.
        Utterance seed = ref.utterances.front();
        seed.index = 0;
        gen.conversation.utterances.push_back(std::move(seed));

        const std::size_t target =
            std::min<std::size_t>(ref.utterances.size(), static_cast<std::size_t>(max_turns));
        while (gen.conversation.utterances.size() < target) {
            Role responder_role = opposite(gen.conversation.utterances.back().role);
            PromptSpec spec = render_prompt(responder_role, ref.age_months,
                                            gen.conversation.utterances, shots, exemplars);
            std::string reply_text;
            try {
                ChatBackend& backend = responder_role == Role::Child ? *child : *caregiver;
                reply_text = backend.complete(spec).text;
            } catch (const Error& ex) {
                log_line(options, ref.id + " turn " +
                                      std::to_string(gen.conversation.utterances.size()) + ": " +
                                      ex.what());
                gen.truncated = true;  // exhausted: keep what we have
                break;
            }
            gen.conversation.utterances.push_back(normalize_utterance(
                reply_text, responder_role,
                static_cast<int>(gen.conversation.utterances.size())));
        }
        if (options.on_reference_complete) options.on_reference_complete(ref.id, {gen});
        results[i] = std::move(gen);
    });
    for (auto& maybe : results) {
        if (!maybe) continue;
        corpus.conversations.push_back(std::move(*maybe));
    }
    return corpus;
}

}  // namespace cdsbench
