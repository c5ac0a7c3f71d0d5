#pragma once

#include "ilmtr/config.hpp"
#include "ilmtr/dual_summary.hpp"
#include "ilmtr/gateway.hpp"
#include "ilmtr/gmm.hpp"
#include "ilmtr/tree_node.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ilmtr {

struct BuildMeta {
    std::string config_snapshot;
    std::uint64_t seed = 0;
    std::string corpus_digest;
    // False for trees built with the plain summary prompt (no surprise nodes).
    bool dual_summaries = true;

    bool operator==(const BuildMeta&) const = default;
};

struct Tree {
    // Indexed by NodeId.
    std::vector<TreeNode> nodes;
    // Node ids per level, leaves first. Every layer is a contiguous id range.
    std::vector<std::vector<NodeId>> layers;
    int root_level = 0;
    BuildMeta meta;

    const TreeNode& node(NodeId id) const { return nodes.at(id); }
    // Leaf/summary node count per level (surprise nodes excluded).
    std::vector<std::size_t> layer_sizes() const;
    std::size_t surprise_count() const;

    bool operator==(const Tree&) const = default;
};

// What each clustering round grouped, for auditing the build.
struct ClusterRecord {
    int level = 0;
    std::vector<std::vector<NodeId>> groups;
    // True when the layer was collapsed into one root group without fitting.
    bool collapsed = false;
};

struct BuildTrace {
    std::vector<ClusterRecord> rounds;
};

struct BuildOptions {
    // Plain summaries without the surprise channel (tree-retrieval baseline).
    bool dual_summaries = true;
    // Concurrent summary calls within a layer.
    std::size_t threads = 1;
    ProjectionHook projection;
};

// Chunks `raw`, summarizes every chunk into level 1 and then repeats
// cluster -> summarize until clustering refuses or one summary remains.
// When clustering refuses (or does not shrink the layer) on a layer with
// more than one summary, the layer is summarized as a single root group.
// Backend and reply-parse failures propagate and abort the build.
Tree build_tree(std::string_view raw, const RunConfig& config, ChatBackend& summary_backend,
                EmbeddingBackend& embedder, const BuildOptions& options = {}, BuildTrace* trace = nullptr);

}  // namespace ilmtr
