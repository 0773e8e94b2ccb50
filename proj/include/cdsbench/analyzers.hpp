#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace cdsbench {

struct EmbeddingVector {
    std::vector<double> values;

    int dimension() const { return static_cast<int>(values.size()); }
    double norm() const;
};

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Per-token head indices; the single root has head kRootHead.
struct DependencyParse {
    static constexpr int kRootHead = -1;

    std::vector<std::string> tokens;
    std::vector<int> heads;
};

// Throws InvalidTree unless heads form a single-rooted acyclic tree.
void validate_parse(const DependencyParse& parse);

// Max node count on any root-to-leaf path; a single token has depth 1.
// This is the reading reported as the syntactic-depth measure.
int tree_depth(const DependencyParse& parse);

// Alternative reading: mean node depth over all tokens (root depth 1).
// Computed alongside tree_depth so either convention can be reported.
double mean_token_depth(const DependencyParse& parse);

// Descriptor for either provider kind, loaded from run configuration.
struct ProviderDescriptor {
    std::string kind;     // embedder: hashed|http|fixture; parser: chain|http|fixture
    std::string name;     // reporting label; defaults to kind
    std::string endpoint; // http providers
    std::string fixture;  // fixture providers
    int dimension = 256;  // hashed embedder
    int batch_size = 64;
    int max_concurrency = 1;
    int timeout_ms = 10000;
    int max_retries = 2;

    std::string label() const { return name.empty() ? kind : name; }
};

class Embedder {
public:
    virtual ~Embedder() = default;
    // One unit-norm vector per input text; identical texts yield identical
    // vectors within a run.
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) = 0;
    virtual int dimension() const = 0;
    virtual const ProviderDescriptor& descriptor() const = 0;
};

class DependencyParser {
public:
    virtual ~DependencyParser() = default;
    virtual DependencyParse parse_heads(const std::vector<std::string>& tokens) = 0;
    virtual const ProviderDescriptor& descriptor() const = 0;
};

// Hashed bag-of-words fallback: token -> fixed bucket, count, L2-normalize.
// Bit-deterministic across platforms; no model downloads.
class HashedEmbedder final : public Embedder {
public:
    explicit HashedEmbedder(ProviderDescriptor desc);
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    int dimension() const override { return desc_.dimension; }
    const ProviderDescriptor& descriptor() const override { return desc_; }

    static std::size_t token_bucket(const std::string& token, int dimension);

private:
    ProviderDescriptor desc_;
};

// Right-branching chain fallback: heads = [root, 0, 1, ...]. Structure is
// non-semantic; depth equals token count by construction.
class ChainParser final : public DependencyParser {
public:
    explicit ChainParser(ProviderDescriptor desc) : desc_(std::move(desc)) {}
    DependencyParse parse_heads(const std::vector<std::string>& tokens) override;
    const ProviderDescriptor& descriptor() const override { return desc_; }

private:
    ProviderDescriptor desc_;
};

// Golden-file providers for tests: exact text/token-sequence lookup,
// ProviderUnavailable on miss.
class FixtureEmbedder final : public Embedder {
public:
    explicit FixtureEmbedder(ProviderDescriptor desc);
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    int dimension() const override { return dimension_; }
    const ProviderDescriptor& descriptor() const override { return desc_; }

private:
    ProviderDescriptor desc_;
    int dimension_ = 0;
    std::unordered_map<std::string, EmbeddingVector> vectors_;
};

class FixtureParser final : public DependencyParser {
public:
    explicit FixtureParser(ProviderDescriptor desc);
    DependencyParse parse_heads(const std::vector<std::string>& tokens) override;
    const ProviderDescriptor& descriptor() const override { return desc_; }

private:
    ProviderDescriptor desc_;
    std::unordered_map<std::string, std::vector<int>> heads_;
};

// Caps in-flight requests at the descriptor's declared max_concurrency.
class ProviderGate;

// HTTP adapters. Wire contract:
//   POST <endpoint>/embed  {"texts":[...]}  -> {"vectors":[[...],...]}
//   POST <endpoint>/parse  {"tokens":[...]} -> {"heads":[...]}
class HttpEmbedder final : public Embedder {
public:
    explicit HttpEmbedder(ProviderDescriptor desc);
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    int dimension() const override { return desc_.dimension; }
    const ProviderDescriptor& descriptor() const override { return desc_; }

private:
    ProviderDescriptor desc_;
    std::shared_ptr<ProviderGate> gate_;
};

class HttpParser final : public DependencyParser {
public:
    explicit HttpParser(ProviderDescriptor desc);
    DependencyParse parse_heads(const std::vector<std::string>& tokens) override;
    const ProviderDescriptor& descriptor() const override { return desc_; }

private:
    ProviderDescriptor desc_;
    std::shared_ptr<ProviderGate> gate_;
};

// Memoizing wrapper; also enforces the identical-input determinism contract
// for live providers. Thread safe.
class CachingEmbedder final : public Embedder {
public:
    explicit CachingEmbedder(std::unique_ptr<Embedder> inner) : inner_(std::move(inner)) {}
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    int dimension() const override { return inner_->dimension(); }
    const ProviderDescriptor& descriptor() const override { return inner_->descriptor(); }

private:
    std::unique_ptr<Embedder> inner_;
    std::mutex mutex_;
    std::unordered_map<std::string, EmbeddingVector> cache_;
};

std::unique_ptr<Embedder> make_embedder(const ProviderDescriptor& desc);
std::unique_ptr<DependencyParser> make_parser(const ProviderDescriptor& desc);

}  // namespace cdsbench
