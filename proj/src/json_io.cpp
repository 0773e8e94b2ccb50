#include "cdsbench/json_io.hpp"

#include "cdsbench/error.hpp"

namespace cdsbench {

using nlohmann::json;

json provider_to_json(const ProviderDescriptor& desc) {
    json j;
    j["kind"] = desc.kind;
    j["name"] = desc.name;
    j["endpoint"] = desc.endpoint;
    j["fixture"] = desc.fixture;
    j["dimension"] = desc.dimension;
    j["batch_size"] = desc.batch_size;
    j["max_concurrency"] = desc.max_concurrency;
    j["timeout_ms"] = desc.timeout_ms;
    j["max_retries"] = desc.max_retries;
    return j;
}

ProviderDescriptor provider_from_json(const json& j) {
    ProviderDescriptor desc;
    desc.kind = j.value("kind", desc.kind);
    desc.name = j.value("name", desc.name);
    desc.endpoint = j.value("endpoint", desc.endpoint);
    desc.fixture = j.value("fixture", desc.fixture);
    desc.dimension = j.value("dimension", desc.dimension);
    desc.batch_size = j.value("batch_size", desc.batch_size);
    desc.max_concurrency = j.value("max_concurrency", desc.max_concurrency);
    desc.timeout_ms = j.value("timeout_ms", desc.timeout_ms);
    desc.max_retries = j.value("max_retries", desc.max_retries);
    return desc;
}

json backend_to_json(const BackendDescriptor& desc) {
    json j;
    j["kind"] = desc.kind;
    j["id"] = desc.id;
    j["endpoint"] = desc.endpoint;
    j["model"] = desc.model;
    j["temperature"] = desc.temperature;
    j["max_concurrency"] = desc.max_concurrency;
    j["timeout_ms"] = desc.timeout_ms;
    j["max_retries"] = desc.retry.max_retries;
    j["initial_backoff_ms"] = desc.retry.initial_backoff_ms;
    j["backoff_multiplier"] = desc.retry.multiplier;
    j["fixture"] = desc.fixture_path;
    j["script"] = desc.script;
    j["api_key_env"] = desc.api_key_env;
    return j;
}

BackendDescriptor backend_from_json(const json& j) {
    BackendDescriptor desc;
    desc.kind = j.value("kind", desc.kind);
    desc.id = j.value("id", desc.id);
    desc.endpoint = j.value("endpoint", desc.endpoint);
    desc.model = j.value("model", desc.model);
    desc.temperature = j.value("temperature", desc.temperature);
    desc.max_concurrency = j.value("max_concurrency", desc.max_concurrency);
    desc.timeout_ms = j.value("timeout_ms", desc.timeout_ms);
    desc.retry.max_retries = j.value("max_retries", desc.retry.max_retries);
    desc.retry.initial_backoff_ms = j.value("initial_backoff_ms", desc.retry.initial_backoff_ms);
    desc.retry.multiplier = j.value("backoff_multiplier", desc.retry.multiplier);
    desc.fixture_path = j.value("fixture", desc.fixture_path);
    if (j.contains("script")) {
        desc.script = j.at("script").get<std::vector<std::string>>();
    }
    desc.api_key_env = j.value("api_key_env", desc.api_key_env);
    return desc;
}

}  // namespace cdsbench
