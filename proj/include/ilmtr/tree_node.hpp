#pragma once

#include "ilmtr/gateway.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ilmtr {

using NodeId = std::uint32_t;

enum class NodeKind : std::uint8_t { leaf_text = 0, summary = 1, surprise = 2 };

const char* to_string(NodeKind kind);

struct TreeNode {
    NodeId id = 0;
    int level = 0;
    NodeKind kind = NodeKind::leaf_text;
    std::string text;
    Embedding embedding;
    // Empty for leaves and surprise nodes.
    std::vector<NodeId> children;
    // Surprise node -> summary node extracted from the same input.
    std::optional<NodeId> sibling;
    std::size_t token_count = 0;

    bool operator==(const TreeNode&) const = default;
};

}  // namespace ilmtr
