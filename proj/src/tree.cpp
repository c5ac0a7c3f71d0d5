#include "ilmtr/tree.hpp"

#include "ilmtr/chunker.hpp"
#include "ilmtr/digest.hpp"

#include <algorithm>
#include <exception>
#include <future>
#include <stdexcept>

namespace ilmtr {
namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Results are keyed
// by index; the lowest-index failure is rethrown.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t threads, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
    using Result = decltype(fn(std::size_t{}));
    std::vector<Result> out(n);
    std::vector<std::exception_ptr> errors(n);
    threads = std::max<std::size_t>(1, threads);
    for (std::size_t start = 0; start < n; start += threads) {
        const std::size_t stop = std::min(n, start + threads);
        if (threads == 1) {
            try {
                out[start] = fn(start);
            } catch (...) {
                errors[start] = std::current_exception();
            }
        } else {
            std::vector<std::future<void>> batch;
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(std::async(std::launch::async, [&, i] {
                    try {
                        out[i] = fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }));
            }
            for (auto& f : batch) f.get();
        }
        for (std::size_t i = start; i < stop; ++i)
            if (errors[i]) std::rethrow_exception(errors[i]);
    }
    return out;
}

class Builder {
public:
    Builder(const RunConfig& config, ChatBackend& chat, EmbeddingBackend& embedder, const BuildOptions& options,
            BuildTrace* trace)
        : config_(config),
          embedder_(embedder),
          options_(options),
          trace_(trace),
          summarizer_(chat, config.summary, config.retriever.summary_max_tokens, options.dual_summaries) {}

    Tree run(std::string_view raw) {
        const auto chunks = chunk_text(raw, static_cast<std::size_t>(config_.retriever.chunk_max_tokens));
        if (chunks.empty()) throw std::invalid_argument("build_tree: input has no text");

        tree_.meta.config_snapshot = serialize_config(config_);
        tree_.meta.seed = config_.retriever.rng_seed;
        tree_.meta.corpus_digest = sha256_hex(raw);
        tree_.meta.dual_summaries = options_.dual_summaries;

        std::vector<TreeNode> leaves;
        for (const auto& chunk : chunks) {
            TreeNode leaf;
            leaf.kind = NodeKind::leaf_text;
            leaf.level = 0;
            leaf.text = chunk.text;
            leaves.push_back(std::move(leaf));
        }
        append_layer(std::move(leaves));

        // Level 1: one dual summary per chunk.
        std::vector<std::vector<NodeId>> groups;
        for (NodeId id : tree_.layers[0]) groups.push_back({id});
        summarize_groups(groups, 1);

        for (int level = 1;; ++level) {
            const auto summaries = summary_ids(level);
            if (summaries.size() <= 1) break;
            const auto& layer_ids = tree_.layers[static_cast<std::size_t>(level)];
            const std::span<const TreeNode> layer(tree_.nodes.data() + layer_ids.front(), layer_ids.size());
            auto assignment = cluster_layer(layer, config_.retriever, options_.projection);

            ClusterRecord record;
            record.level = level;
            if (!assignment || assignment->clusters.size() >= summaries.size()) {
                record.groups = {summaries};
                record.collapsed = true;
            } else {
                for (const auto& members : assignment->clusters) {
                    std::vector<NodeId> group;
                    for (std::size_t p : members) group.push_back(assignment->node_ids[p]);
                    std::sort(group.begin(), group.end());
                    record.groups.push_back(std::move(group));
                }
            }
            if (trace_) trace_->rounds.push_back(record);
            summarize_groups(record.groups, level + 1);
            if (record.collapsed) break;
        }
        tree_.root_level = static_cast<int>(tree_.layers.size()) - 1;
        return std::move(tree_);
    }

private:
    std::vector<NodeId> summary_ids(int level) const {
        std::vector<NodeId> ids;
        for (NodeId id : tree_.layers[static_cast<std::size_t>(level)])
            if (tree_.nodes[id].kind != NodeKind::surprise) ids.push_back(id);
        return ids;
    }

    void summarize_groups(const std::vector<std::vector<NodeId>>& groups, int level) {
        auto results = parallel_map(groups.size(), options_.threads, [&](std::size_t g) {
            std::string input;
            for (NodeId id : groups[g]) {
                if (!input.empty()) input += "\n\n";
                input += tree_.nodes[id].text;
            }
            return summarizer_.summarize(input);
        });

        std::vector<TreeNode> layer;
        const auto base = static_cast<NodeId>(tree_.nodes.size());
        for (std::size_t g = 0; g < groups.size(); ++g) {
            TreeNode summary;
            summary.kind = NodeKind::summary;
            summary.level = level;
            summary.text = std::move(results[g].summary);
            summary.children = groups[g];
            const auto summary_id = static_cast<NodeId>(base + layer.size());
            layer.push_back(std::move(summary));
            if (!results[g].surprise.empty()) {
                TreeNode surprise;
                surprise.kind = NodeKind::surprise;
                surprise.level = level;
                surprise.text = std::move(results[g].surprise);
                surprise.sibling = summary_id;
                layer.push_back(std::move(surprise));
            }
        }
        append_layer(std::move(layer));
    }

    void append_layer(std::vector<TreeNode> layer) {
        std::vector<std::string> texts;
        texts.reserve(layer.size());
        for (const auto& node : layer) texts.push_back(node.text);
        auto embeddings = embedder_.embed(texts);
        if (embeddings.size() != layer.size())
            throw GatewayError(GatewayError::Kind::bad_response, "embedding backend returned a short batch");

        std::vector<NodeId> ids;
        for (std::size_t i = 0; i < layer.size(); ++i) {
            auto& node = layer[i];
            node.id = static_cast<NodeId>(tree_.nodes.size());
            node.embedding = std::move(embeddings[i]);
            node.token_count = count_tokens(node.text);
            if (!tree_.nodes.empty() && node.embedding.dim() != tree_.nodes.front().embedding.dim())
                throw GatewayError(GatewayError::Kind::dimension_mismatch, "embedding dimension changed mid-build");
            ids.push_back(node.id);
            tree_.nodes.push_back(std::move(node));
        }
        tree_.layers.push_back(std::move(ids));
    }

    const RunConfig& config_;
    EmbeddingBackend& embedder_;
    const BuildOptions& options_;
    BuildTrace* trace_;
    Summarizer summarizer_;
    Tree tree_;
};

}  // namespace

std::vector<std::size_t> Tree::layer_sizes() const {
    std::vector<std::size_t> sizes;
    for (const auto& layer : layers) {
        std::size_t n = 0;
        for (NodeId id : layer)
            if (nodes[id].kind != NodeKind::surprise) ++n;
        sizes.push_back(n);
    }
    return sizes;
}

std::size_t Tree::surprise_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.kind == NodeKind::surprise; }));
}

const char* to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::leaf_text: return "leaf_text";
        case NodeKind::summary: return "summary";
        case NodeKind::surprise: return "surprise";
    }
    return "?";
}

Tree build_tree(std::string_view raw, const RunConfig& config, ChatBackend& summary_backend,
                EmbeddingBackend& embedder, const BuildOptions& options, BuildTrace* trace) {
    if (raw.find_first_not_of(" \t\r\n") == std::string_view::npos)
        throw std::invalid_argument("build_tree: input is empty");
    return Builder(config, summary_backend, embedder, options, trace).run(raw);
}

}  // namespace ilmtr
