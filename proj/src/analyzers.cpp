#include "cdsbench/analyzers.hpp"

#include "cdsbench/error.hpp"
#include "cdsbench/util.hpp"

#include <json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <thread>

namespace cdsbench {

// The harness may profile conversations from several workers at once; live
// providers honor their declared concurrency limit here.
class ProviderGate {
public:
    explicit ProviderGate(int limit) : available_(limit < 1 ? 1 : limit) {}

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

class ProviderGateScope {
public:
    explicit ProviderGateScope(ProviderGate* gate) : gate_(gate) {
        if (gate_) gate_->enter();
    }
    ~ProviderGateScope() {
        if (gate_) gate_->leave();
    }
    ProviderGateScope(const ProviderGateScope&) = delete;
    ProviderGateScope& operator=(const ProviderGateScope&) = delete;

private:
    ProviderGate* gate_;
};

}  // namespace

namespace {

using nlohmann::json;

// Fixed seed for the hashed bag-of-words fallback; changing it would change
// every recorded fixture value.
constexpr std::uint64_t kHashedEmbedderSeed = 0x3f5c3c6119a03dd9ULL;

std::string parse_key(const std::vector<std::string>& tokens) {
    std::string key;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) key.push_back(' ');
        key += tokens[i];
    }
    return key;
}

// Splits "http://host:port/base" into client target and path prefix.
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

json http_post_json(const ProviderDescriptor& desc, const std::string& route,
                    const json& body) {
    EndpointParts parts = split_endpoint(desc.endpoint);
    httplib::Client client(parts.host_port);
    client.set_connection_timeout(0, desc.timeout_ms * 1000);
    client.set_read_timeout(desc.timeout_ms / 1000, (desc.timeout_ms % 1000) * 1000);

    std::string last_error;
    int backoff_ms = 100;
    for (int attempt = 0; attempt <= desc.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
        auto res = client.Post(parts.base_path + route, body.dump(), "application/json");
        if (!res) {
            last_error = "transport failure (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status >= 500 || res->status == 429) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw Error(ErrorCode::ProviderUnavailable,
                        desc.label() + " " + route + ": status " + std::to_string(res->status));
        }
        try {
            return json::parse(res->body);
        } catch (const json::exception& ex) {
            throw Error(ErrorCode::ProviderUnavailable,
                        desc.label() + " " + route + ": bad JSON: " + ex.what());
        }
    }
    throw Error(ErrorCode::ProviderUnavailable,
                desc.label() + " " + route + ": retries exhausted, last: " + last_error);
}

}  // namespace

double EmbeddingVector::norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "cosine over " + std::to_string(a.dimension()) + " vs " +
                        std::to_string(b.dimension()) + " dims");
    }
    double dot = 0.0;
    for (int i = 0; i < a.dimension(); ++i) {
        dot += a.values[static_cast<std::size_t>(i)] * b.values[static_cast<std::size_t>(i)];
    }
    return dot;
}

void validate_parse(const DependencyParse& parse) {
    const int n = static_cast<int>(parse.tokens.size());
    if (static_cast<int>(parse.heads.size()) != n) {
        throw Error(ErrorCode::InvalidTree, "heads/tokens length mismatch");
    }
    int roots = 0;
    for (int i = 0; i < n; ++i) {
        int head = parse.heads[static_cast<std::size_t>(i)];
        if (head == DependencyParse::kRootHead || head == i) {
            ++roots;
        } else if (head < 0 || head >= n) {
            throw Error(ErrorCode::InvalidTree, "head index out of range at token " +
                                                    std::to_string(i));
        }
    }
    if (roots != 1) {
        throw Error(ErrorCode::InvalidTree,
                    std::to_string(roots) + " roots in " + std::to_string(n) + "-token parse");
    }
    // Every node must reach the root in at most n steps.
    for (int i = 0; i < n; ++i) {
        int node = i;
        int steps = 0;
        while (parse.heads[static_cast<std::size_t>(node)] != DependencyParse::kRootHead &&
               parse.heads[static_cast<std::size_t>(node)] != node) {
            node = parse.heads[static_cast<std::size_t>(node)];
            if (++steps > n) {
                throw Error(ErrorCode::InvalidTree, "cycle reachable from token " +
                                                        std::to_string(i));
            }
        }
    }
}

namespace {

int node_depth(const DependencyParse& parse, int i) {
    int node = i;
    int depth = 1;
    while (parse.heads[static_cast<std::size_t>(node)] != DependencyParse::kRootHead &&
           parse.heads[static_cast<std::size_t>(node)] != node) {
        node = parse.heads[static_cast<std::size_t>(node)];
        ++depth;
    }
    return depth;
}

}  // namespace

int tree_depth(const DependencyParse& parse) {
    validate_parse(parse);
    int max_depth = 0;
    for (int i = 0; i < static_cast<int>(parse.tokens.size()); ++i) {
        max_depth = std::max(max_depth, node_depth(parse, i));
    }
    return max_depth;
}

double mean_token_depth(const DependencyParse& parse) {
    validate_parse(parse);
    const int n = static_cast<int>(parse.tokens.size());
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        sum += node_depth(parse, i);
    }
    return n == 0 ? 0.0 : sum / n;
}

HashedEmbedder::HashedEmbedder(ProviderDescriptor desc) : desc_(std::move(desc)) {
    if (desc_.dimension <= 0) {
        throw Error(ErrorCode::DimensionMismatch, "hashed embedder dimension must be positive");
    }
}

std::size_t HashedEmbedder::token_bucket(const std::string& token, int dimension) {
    return uniform_index(fmix64(fnv1a64(token, kHashedEmbedderSeed)),
                         static_cast<std::size_t>(dimension));
}

std::vector<EmbeddingVector> HashedEmbedder::embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const std::string& text : texts) {
        EmbeddingVector vec;
        vec.values.assign(static_cast<std::size_t>(desc_.dimension), 0.0);
        std::vector<std::string> tokens = split_ws(text);
        if (tokens.empty()) {
            throw Error(ErrorCode::ProviderUnavailable,
                        "hashed embedder got empty text; silence must be filtered upstream");
        }
        for (const std::string& token : tokens) {
            vec.values[token_bucket(token, desc_.dimension)] += 1.0;
        }
        double norm = vec.norm();
        for (double& v : vec.values) v /= norm;
        out.push_back(std::move(vec));
    }
    return out;
}

DependencyParse ChainParser::parse_heads(const std::vector<std::string>& tokens) {
    if (tokens.empty()) {
        throw Error(ErrorCode::ProviderUnavailable, "chain parser got zero tokens");
    }
    DependencyParse parse;
    parse.tokens = tokens;
    parse.heads.resize(tokens.size());
    parse.heads[0] = DependencyParse::kRootHead;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        parse.heads[i] = static_cast<int>(i) - 1;
    }
    return parse;
}

FixtureEmbedder::FixtureEmbedder(ProviderDescriptor desc) : desc_(std::move(desc)) {
    json doc = json::parse(read_text_file(desc_.fixture));
    for (auto& [text, values] : doc.items()) {
        EmbeddingVector vec;
        for (const auto& v : values) vec.values.push_back(v.get<double>());
        if (dimension_ == 0) dimension_ = vec.dimension();
        if (vec.dimension() != dimension_) {
            throw Error(ErrorCode::DimensionMismatch,
                        "fixture vector for '" + text + "' has dimension " +
                            std::to_string(vec.dimension()));
        }
        vectors_.emplace(text, std::move(vec));
    }
}

std::vector<EmbeddingVector> FixtureEmbedder::embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const std::string& text : texts) {
        auto it = vectors_.find(text);
        if (it == vectors_.end()) {
            throw Error(ErrorCode::ProviderUnavailable,
                        "no fixture embedding for '" + text + "'");
        }
        out.push_back(it->second);
    }
    return out;
}

FixtureParser::FixtureParser(ProviderDescriptor desc) : desc_(std::move(desc)) {
    json doc = json::parse(read_text_file(desc_.fixture));
    for (auto& [key, heads] : doc.items()) {
        std::vector<int> h;
        for (const auto& v : heads) h.push_back(v.get<int>());
        heads_.emplace(key, std::move(h));
    }
}

DependencyParse FixtureParser::parse_heads(const std::vector<std::string>& tokens) {
    auto it = heads_.find(parse_key(tokens));
    if (it == heads_.end()) {
        throw Error(ErrorCode::ProviderUnavailable,
                    "no fixture parse for '" + parse_key(tokens) + "'");
    }
    DependencyParse parse;
    parse.tokens = tokens;
    parse.heads = it->second;
    validate_parse(parse);
    return parse;
}

HttpEmbedder::HttpEmbedder(ProviderDescriptor desc)
    : desc_(std::move(desc)),
      gate_(std::make_shared<ProviderGate>(desc_.max_concurrency)) {}

std::vector<EmbeddingVector> HttpEmbedder::embed_batch(const std::vector<std::string>& texts) {
    ProviderGateScope scope(gate_.get());
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    std::size_t batch = desc_.batch_size > 0 ? static_cast<std::size_t>(desc_.batch_size) : 64;
    for (std::size_t start = 0; start < texts.size(); start += batch) {
        std::size_t end = std::min(texts.size(), start + batch);
        json body;
        body["texts"] = json::array();
        for (std::size_t i = start; i < end; ++i) body["texts"].push_back(texts[i]);
        json reply = http_post_json(desc_, "/embed", body);
        if (!reply.contains("vectors") || !reply["vectors"].is_array() ||
            reply["vectors"].size() != end - start) {
            throw Error(ErrorCode::ProviderUnavailable,
                        desc_.label() + ": /embed reply missing vectors");
        }
        for (const auto& values : reply["vectors"]) {
            EmbeddingVector vec;
            for (const auto& v : values) vec.values.push_back(v.get<double>());
            if (!out.empty() && vec.dimension() != out.front().dimension()) {
                throw Error(ErrorCode::DimensionMismatch,
                            desc_.label() + ": inconsistent embedding dimensions");
            }
            double norm = vec.norm();
            if (std::abs(norm - 1.0) > 1e-6) {
                if (norm <= 0.0) {
                    throw Error(ErrorCode::ProviderUnavailable,
                                desc_.label() + ": zero-norm embedding");
                }
                for (double& v : vec.values) v /= norm;
            }
            out.push_back(std::move(vec));
        }
    }
    return out;
}

HttpParser::HttpParser(ProviderDescriptor desc)
    : desc_(std::move(desc)),
      gate_(std::make_shared<ProviderGate>(desc_.max_concurrency)) {}

DependencyParse HttpParser::parse_heads(const std::vector<std::string>& tokens) {
    if (tokens.empty()) {
        throw Error(ErrorCode::ProviderUnavailable, "http parser got zero tokens");
    }
    ProviderGateScope scope(gate_.get());
    json body;
    body["tokens"] = tokens;
    json reply = http_post_json(desc_, "/parse", body);
    if (!reply.contains("heads") || !reply["heads"].is_array()) {
        throw Error(ErrorCode::ProviderUnavailable, desc_.label() + ": /parse reply missing heads");
    }
    DependencyParse parse;
    parse.tokens = tokens;
    for (const auto& v : reply["heads"]) parse.heads.push_back(v.get<int>());
    validate_parse(parse);  // provider output rejected, not repaired
    return parse;
}

std::vector<EmbeddingVector> CachingEmbedder::embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::size_t> missing_indices;
    std::vector<std::string> missing_texts;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            auto it = cache_.find(texts[i]);
            if (it != cache_.end()) {
                out[i] = it->second;
            } else {
                missing_indices.push_back(i);
                missing_texts.push_back(texts[i]);
            }
        }
    }
    if (!missing_texts.empty()) {
        std::vector<EmbeddingVector> fresh = inner_->embed_batch(missing_texts);
        std::lock_guard<std::mutex> lock(mutex_);
        for (std::size_t i = 0; i < missing_indices.size(); ++i) {
            cache_[missing_texts[i]] = fresh[i];
            out[missing_indices[i]] = std::move(fresh[i]);
        }
    }
    return out;
}

std::unique_ptr<Embedder> make_embedder(const ProviderDescriptor& desc) {
    if (desc.kind == "hashed") return std::make_unique<HashedEmbedder>(desc);
    if (desc.kind == "fixture") return std::make_unique<FixtureEmbedder>(desc);
    if (desc.kind == "http") {
        return std::make_unique<CachingEmbedder>(std::make_unique<HttpEmbedder>(desc));
    }
    throw Error(ErrorCode::ConfigInvalid, "unknown embedder kind '" + desc.kind + "'");
}

std::unique_ptr<DependencyParser> make_parser(const ProviderDescriptor& desc) {
    if (desc.kind == "chain") return std::make_unique<ChainParser>(desc);
    if (desc.kind == "fixture") return std::make_unique<FixtureParser>(desc);
    if (desc.kind == "http") return std::make_unique<HttpParser>(desc);
    throw Error(ErrorCode::ConfigInvalid, "unknown parser kind '" + desc.kind + "'");
}

}  // namespace cdsbench
