#include "ilmtr/retrieval_index.hpp"

#include "ilmtr/digest.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace ilmtr {
namespace {

constexpr std::string_view kMagic = "ILMTR-INDEX";

void append_f64_le(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xFF);
}

double read_f64_le(std::string_view bytes) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)]);
    return std::bit_cast<double>(bits);
}

[[noreturn]] void fail(IndexFormatError::Kind kind, const std::string& what) {
    throw IndexFormatError(kind, "index file: " + what);
}

// Sequential reader over the file bytes; running off the end is reported
// as truncation.
class Cursor {
public:
    explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

    std::string_view line() {
        const auto nl = bytes_.find('\n', pos_);
        if (nl == std::string_view::npos) fail(IndexFormatError::Kind::truncated, "unexpected end of file");
        auto out = bytes_.substr(pos_, nl - pos_);
        pos_ = nl + 1;
        return out;
    }

    std::string_view take(std::size_t n) {
        if (bytes_.size() - pos_ < n) fail(IndexFormatError::Kind::truncated, "unexpected end of file");
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    void expect_newline() {
        if (take(1) != "\n") fail(IndexFormatError::Kind::malformed, "missing record terminator");
    }

    std::size_t pos() const { return pos_; }
    std::string_view rest() const { return bytes_.substr(pos_); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::string_view> fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && line[i] == ' ') ++i;
        const auto j = std::min(line.find(' ', i), line.size());
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

template <typename Int>
Int to_int(std::string_view s, const char* what) {
    Int v{};
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size())
        fail(IndexFormatError::Kind::malformed, std::string("bad ") + what + " '" + std::string(s) + "'");
    return v;
}

// "key value" header line.
std::string_view header_value(Cursor& c, std::string_view key) {
    const auto line = c.line();
    if (line.size() <= key.size() || line.substr(0, key.size()) != key || line[key.size()] != ' ')
        fail(IndexFormatError::Kind::malformed, "expected header field '" + std::string(key) + "'");
    return line.substr(key.size() + 1);
}

}  // namespace

RetrievalIndex::RetrievalIndex(Tree tree) {
    if (tree.nodes.empty()) throw std::invalid_argument("retrieval index: tree has no nodes");
    dim_ = tree.nodes.front().embedding.dim();
    if (dim_ == 0) throw std::invalid_argument("retrieval index: nodes carry no embeddings");
    for (const auto& node : tree.nodes) {
        if (node.embedding.dim() != dim_)
            throw std::invalid_argument("retrieval index: node " + std::to_string(node.id) +
                                        " has embedding dimension " + std::to_string(node.embedding.dim()));
        double sq = 0.0;
        for (double v : node.embedding.vector) sq += v * v;
        if (std::abs(std::sqrt(sq) - 1.0) >= 1e-6)
            throw std::invalid_argument("retrieval index: node " + std::to_string(node.id) + " is not unit norm");
        entries_.push_back({node.id, node.kind, node.level, node.token_count});
    }
    tree_ = std::make_shared<const Tree>(std::move(tree));
}

std::string hit_header(const TreeNode& node) {
    return "### node " + std::to_string(node.id) + " (level " + std::to_string(node.level) + ", " +
           to_string(node.kind) + ")";
}

RetrievedInfo retrieve_by_embedding(const RetrievalIndex& index, std::span<const double> query,
                                    const RetrieverParams& params) {
    const auto entries = index.entries();
    std::vector<Hit> ranked;
    ranked.reserve(entries.size());
    for (const auto& e : entries) ranked.push_back({e.id, cosine(query, index.embedding(e.id))});
    std::sort(ranked.begin(), ranked.end(), [](const Hit& a, const Hit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    // Scores within kTieEpsilon of the first score in their run count as tied,
    // so rounding noise cannot reorder equal cosines of different vectors.
    for (std::size_t begin = 0; begin < ranked.size();) {
        std::size_t end = begin + 1;
        while (end < ranked.size() && ranked[begin].score - ranked[end].score <= kTieEpsilon) ++end;
        std::sort(ranked.begin() + static_cast<std::ptrdiff_t>(begin), ranked.begin() + static_cast<std::ptrdiff_t>(end),
                  [](const Hit& a, const Hit& b) { return a.id < b.id; });
        begin = end;
    }

    RetrievedInfo out;
    const auto top_k = static_cast<std::size_t>(std::max(0, params.retrieval_top_k));
    const auto budget = static_cast<std::size_t>(std::max(0, params.retrieval_token_budget));
    for (const auto& hit : ranked) {
        if (out.hits.size() >= top_k) break;
        const auto& node = index.tree().node(hit.id);
        if (out.total_tokens + node.token_count > budget) break;
        out.total_tokens += node.token_count;
        out.hits.push_back(hit);
        if (!out.assembled_text.empty()) out.assembled_text += "\n\n";
        out.assembled_text += hit_header(node) + "\n" + node.text;
    }
    return out;
}

RetrievedInfo collapsed_retrieve(const RetrievalIndex& index, const std::string& query_text,
                                 EmbeddingBackend& embedder, const RetrieverParams& params) {
    if (index.entries().empty()) throw std::invalid_argument("collapsed_retrieve: empty index");
    const std::vector<std::string> batch{query_text};
    const auto q = embedder.embed(batch);
    if (q.size() != 1) throw GatewayError(GatewayError::Kind::bad_response, "query embedding batch has wrong size");
    if (q.front().dim() != index.dim())
        throw GatewayError(GatewayError::Kind::dimension_mismatch,
                           "query embedding dimension " + std::to_string(q.front().dim()) + " vs index " +
                               std::to_string(index.dim()));
    return retrieve_by_embedding(index, q.front().vector, params);
}

std::string serialize_index(const RetrievalIndex& index) {
    const Tree& tree = index.tree();
    std::string payload;
    payload += "config " + std::to_string(tree.meta.config_snapshot.size()) + "\n";
    payload += tree.meta.config_snapshot;
    payload += "\n";
    for (const auto& node : tree.nodes) {
        payload += "node " + std::to_string(node.id) + " " + std::to_string(node.level) + " " + to_string(node.kind) +
                   " " + (node.sibling ? std::to_string(*node.sibling) : std::string("-")) + " " +
                   std::to_string(node.token_count) + " " + std::to_string(node.children.size());
        for (NodeId c : node.children) payload += " " + std::to_string(c);
        payload += " text " + std::to_string(node.text.size()) + "\n";
        payload += node.text;
        payload += "\n";
        payload += "embedding " + std::to_string(node.embedding.dim()) + "\n";
        for (double v : node.embedding.vector) append_f64_le(payload, v);
        append_f64_le(payload, node.embedding.norm);
        payload += "\n";
    }

    std::string out;
    out += std::string(kMagic) + "\n";
    out += "version " + std::to_string(kIndexFormatVersion) + "\n";
    out += "dim " + std::to_string(index.dim()) + "\n";
    out += "nodes " + std::to_string(tree.nodes.size()) + "\n";
    out += "root_level " + std::to_string(tree.root_level) + "\n";
    out += "seed " + std::to_string(tree.meta.seed) + "\n";
    out += "dual_summaries " + std::string(tree.meta.dual_summaries ? "1" : "0") + "\n";
    out += "corpus_digest " + tree.meta.corpus_digest + "\n";
    out += "payload_bytes " + std::to_string(payload.size()) + "\n";
    // The digest covers every header field above it plus the payload.
    out += "payload_digest " + sha256_hex(out + payload) + "\n";
    out += "\n";
    out += payload;
    return out;
}

RetrievalIndex deserialize_index(std::string_view bytes) {
    Cursor c(bytes);
    if (c.line() != kMagic) fail(IndexFormatError::Kind::malformed, "bad magic");
    const auto version = header_value(c, "version");
    if (version != std::to_string(kIndexFormatVersion))
        fail(IndexFormatError::Kind::version_mismatch,
             "format version '" + std::string(version) + "', expected " + std::to_string(kIndexFormatVersion));
    const auto dim = to_int<std::size_t>(header_value(c, "dim"), "dim");
    const auto count = to_int<std::size_t>(header_value(c, "nodes"), "node count");
    Tree tree;
    tree.root_level = to_int<int>(header_value(c, "root_level"), "root level");
    tree.meta.seed = to_int<std::uint64_t>(header_value(c, "seed"), "seed");
    tree.meta.dual_summaries = header_value(c, "dual_summaries") == "1";
    tree.meta.corpus_digest = std::string(header_value(c, "corpus_digest"));
    const auto payload_bytes = to_int<std::size_t>(header_value(c, "payload_bytes"), "payload size");
    const auto covered_header = bytes.substr(0, c.pos());
    const auto digest = header_value(c, "payload_digest");
    if (!c.line().empty()) fail(IndexFormatError::Kind::malformed, "header not terminated by a blank line");
    if (c.rest().size() < payload_bytes) fail(IndexFormatError::Kind::truncated, "payload shorter than declared");
    if (c.rest().size() > payload_bytes) fail(IndexFormatError::Kind::malformed, "trailing bytes after payload");
    if (sha256_hex(std::string(covered_header) + std::string(c.rest())) != digest) fail(IndexFormatError::Kind::digest_mismatch, "payload digest mismatch");

    const auto config_len = to_int<std::size_t>(header_value(c, "config"), "config length");
    tree.meta.config_snapshot = std::string(c.take(config_len));
    c.expect_newline();

    for (std::size_t i = 0; i < count; ++i) {
        const auto f = fields(c.line());
        if (f.size() < 9 || f[0] != "node") fail(IndexFormatError::Kind::malformed, "bad node record");
        TreeNode node;
        node.id = to_int<NodeId>(f[1], "node id");
        if (node.id != i) fail(IndexFormatError::Kind::malformed, "node ids are not dense");
        node.level = to_int<int>(f[2], "level");
        if (f[3] == "leaf_text") node.kind = NodeKind::leaf_text;
        else if (f[3] == "summary") node.kind = NodeKind::summary;
        else if (f[3] == "surprise") node.kind = NodeKind::surprise;
        else fail(IndexFormatError::Kind::malformed, "bad node kind");
        if (f[4] != "-") node.sibling = to_int<NodeId>(f[4], "sibling");
        node.token_count = to_int<std::size_t>(f[5], "token count");
        const auto nchildren = to_int<std::size_t>(f[6], "child count");
        if (f.size() != 9 + nchildren || f[7 + nchildren] != "text")
            fail(IndexFormatError::Kind::malformed, "bad node record");
        for (std::size_t k = 0; k < nchildren; ++k) node.children.push_back(to_int<NodeId>(f[7 + k], "child id"));
        const auto text_len = to_int<std::size_t>(f[8 + nchildren], "text length");
        node.text = std::string(c.take(text_len));
        c.expect_newline();
        if (c.line().substr(0, 10) != "embedding ") fail(IndexFormatError::Kind::malformed, "missing embedding");
        const auto raw = c.take(8 * (dim + 1));
        node.embedding.vector.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) node.embedding.vector[j] = read_f64_le(raw.substr(8 * j, 8));
        node.embedding.norm = read_f64_le(raw.substr(8 * dim, 8));
        c.expect_newline();
        if (static_cast<std::size_t>(node.level) >= tree.layers.size()) tree.layers.resize(node.level + 1);
        tree.layers[static_cast<std::size_t>(node.level)].push_back(node.id);
        tree.nodes.push_back(std::move(node));
    }
    if (!c.rest().empty()) fail(IndexFormatError::Kind::malformed, "trailing bytes after node table");
    return RetrievalIndex(std::move(tree));
}

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
    const auto bytes = serialize_index(index);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(IndexFormatError::Kind::io, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(IndexFormatError::Kind::io, "write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(IndexFormatError::Kind::io, "cannot move index into place at " + path.string());
    }
}

RetrievalIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(IndexFormatError::Kind::io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_index(buf.str());
}

}  // namespace ilmtr
