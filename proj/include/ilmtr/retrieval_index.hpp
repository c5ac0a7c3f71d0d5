#pragma once

#include "ilmtr/config.hpp"
#include "ilmtr/gateway.hpp"
#include "ilmtr/tree.hpp"

#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ilmtr {

struct IndexEntry {
    NodeId id = 0;
    NodeKind kind = NodeKind::leaf_text;
    int level = 0;
    std::size_t token_count = 0;
};

// Collapsed table over every node of a tree. Immutable once constructed.
class RetrievalIndex {
public:
    // Throws std::invalid_argument if the tree is empty or its embeddings
    // are not unit vectors of one shared dimension.
    explicit RetrievalIndex(Tree tree);

    const Tree& tree() const { return *tree_; }
    std::span<const IndexEntry> entries() const { return entries_; }
    std::size_t dim() const { return dim_; }
    std::span<const double> embedding(NodeId id) const { return tree_->nodes[id].embedding.vector; }

private:
    std::shared_ptr<const Tree> tree_;
    std::vector<IndexEntry> entries_;
    std::size_t dim_ = 0;
};

struct Hit {
    NodeId id = 0;
    double score = 0.0;

    bool operator==(const Hit&) const = default;
};

struct RetrievedInfo {
    std::vector<Hit> hits;
    std::string assembled_text;
    std::size_t total_tokens = 0;
};

// Header line that precedes each hit in assembled_text.
std::string hit_header(const TreeNode& node);

// Cosines closer than this rank as equal.
inline constexpr double kTieEpsilon = 1e-12;

// Ranks every entry by cosine similarity (ties: ascending node id) and
// takes hits in rank order until retrieval_top_k is reached or the next
// hit's token_count would overflow retrieval_token_budget.
RetrievedInfo retrieve_by_embedding(const RetrievalIndex& index, std::span<const double> query,
                                    const RetrieverParams& params);

RetrievedInfo collapsed_retrieve(const RetrievalIndex& index, const std::string& query_text,
                                 EmbeddingBackend& embedder, const RetrieverParams& params);

class IndexFormatError : public std::runtime_error {
public:
    enum class Kind { version_mismatch, digest_mismatch, truncated, malformed, io };

    IndexFormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

inline constexpr int kIndexFormatVersion = 1;

// Text header (magic, version, dim, node count, digests) followed by a node
// table: per node a text line of metadata, the raw text, then the embedding
// as little-endian IEEE-754 doubles.
std::string serialize_index(const RetrievalIndex& index);
RetrievalIndex deserialize_index(std::string_view bytes);

// Writes through a temporary file and renames it into place.
void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

}  // namespace ilmtr
