#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.
// Nothing here calls into the library code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

namespace testing_support {

// Naive exponential LCS.
inline std::size_t lcs_recursive(const std::vector<std::string>& a, std::size_t i, const std::vector<std::string>& b,
                                 std::size_t j) {
    if (i == a.size() || j == b.size()) return 0;
    if (a[i] == b[j]) return 1 + lcs_recursive(a, i + 1, b, j + 1);
    return std::max(lcs_recursive(a, i + 1, b, j), lcs_recursive(a, i, b, j + 1));
}

inline std::size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    return lcs_recursive(a, 0, b, 0);
}

// Sequence number `code` of length `len` over alphabet {x,y,z} (base 3).
inline std::vector<std::string> ternary_sequence(std::size_t len, std::size_t code) {
    static const char* sym[] = {"x", "y", "z"};
    std::vector<std::string> out;
    for (std::size_t i = 0; i < len; ++i) {
        out.emplace_back(sym[code % 3]);
        code /= 3;
    }
    return out;
}

// Lowercase alphanumeric words, counted; cosine computed directly on the
// sparse word counts (no hashing).
inline std::map<std::string, double> word_counts(const std::string& text) {
    std::map<std::string, double> counts;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) counts[word] += 1.0;
        word.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) word += static_cast<char>(std::tolower(c));
        else flush();
    }
    flush();
    return counts;
}

inline double bag_cosine(const std::string& a, const std::string& b) {
    const auto ca = word_counts(a), cb = word_counts(b);
    double dot = 0, na = 0, nb = 0;
    for (const auto& [w, v] : ca) {
        na += v * v;
        if (auto it = cb.find(w); it != cb.end()) dot += v * it->second;
    }
    for (const auto& [w, v] : cb) nb += v * v;
    return dot / std::sqrt(na * nb);
}

// Brute-force collapsed retrieval over raw vectors: full sort by
// (cosine desc, id asc), then top-k / budget cut.
struct OracleNode {
    std::uint32_t id;
    std::vector<double> vec;
    std::size_t tokens;
};

inline std::vector<std::pair<std::uint32_t, double>> brute_force_retrieve(const std::vector<OracleNode>& nodes,
                                                                          const std::vector<double>& query,
                                                                          std::size_t top_k, std::size_t budget) {
    auto cos = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return dot / std::sqrt(na * nb);
    };
    std::vector<std::pair<std::uint32_t, double>> ranked;
    for (const auto& n : nodes) ranked.emplace_back(n.id, cos(n.vec, query));
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return x.first < y.first;
    });
    std::vector<std::pair<std::uint32_t, double>> hits;
    std::size_t used = 0;
    for (const auto& [id, score] : ranked) {
        if (hits.size() == top_k) break;
        const auto t = std::find_if(nodes.begin(), nodes.end(), [&](const OracleNode& n) { return n.id == id; })->tokens;
        if (used + t > budget) break;
        used += t;
        hits.emplace_back(id, score);
    }
    return hits;
}

// Two isotropic 2-D Gaussians at (0,0) and (10,10), sigma 0.5, 100 points
// each, interleaved.
inline std::vector<double> two_gaussians(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<double> pts;
    for (int i = 0; i < 100; ++i) {
        pts.push_back(noise(gen));
        pts.push_back(noise(gen));
        pts.push_back(10.0 + noise(gen));
        pts.push_back(10.0 + noise(gen));
    }
    return pts;
}

// Random corpus whose sentence boundaries are known by construction. Words
// never end in an abbreviation and every sentence ends in . ! or ? followed
// by whitespace; some sentences contain internal punctuation, decimals and
// quotes.
struct TaggedCorpus {
    std::string text;
    std::vector<std::string> sentences;
};

inline TaggedCorpus tagged_corpus(std::uint64_t seed, std::size_t sentence_count, std::size_t max_words = 14) {
    static const std::vector<std::string> words{
        "river", "stone", "lantern", "quiet", "market", "copper", "harbor", "meadow", "signal", "tower",
        "winter", "garden", "ledger", "bridge", "valley", "thread", "window", "orchard", "clock", "ferry",
        "3.5", "42", "north-east", "don't", "e-mail", "x"};
    static const char* enders[] = {".", "!", "?", ".\"", "?)"};
    static const char* gaps[] = {" ", "  ", "\n", "\n\n", "\t "};
    std::mt19937_64 gen(seed);
    auto below = [&](std::size_t n) { return static_cast<std::size_t>(gen() % n); };
    TaggedCorpus c;
    for (std::size_t s = 0; s < sentence_count; ++s) {
        const std::size_t n = 1 + below(max_words);
        std::string sentence;
        for (std::size_t w = 0; w < n; ++w) {
            if (w) sentence += below(7) == 0 ? ", " : " ";
            std::string word = words[below(words.size())];
            if (w == 0) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
            sentence += word;
        }
        sentence += enders[below(5)];
        if (s) c.text += gaps[below(5)];
        c.text += sentence;
        c.sentences.push_back(sentence);
    }
    return c;
}

// Tokens under the counting rule: maximal runs of bytes that are neither
// whitespace nor ASCII punctuation, plus every ASCII punctuation byte alone.
inline std::vector<std::string> oracle_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string run;
    for (unsigned char c : text) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        const bool punct = c < 0x80 && std::ispunct(c);
        if (space || punct) {
            if (!run.empty()) out.push_back(run);
            run.clear();
            if (punct) out.emplace_back(1, static_cast<char>(c));
        } else {
            run += static_cast<char>(c);
        }
    }
    if (!run.empty()) out.push_back(run);
    return out;
}

// Full-table LCS, the textbook recurrence without space optimization.
inline std::size_t lcs_table(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = a.size(); i-- > 0;)
        for (std::size_t j = b.size(); j-- > 0;)
            t[i][j] = a[i] == b[j] ? 1 + t[i + 1][j + 1] : std::max(t[i + 1][j], t[i][j + 1]);
    return t[0][0];
}

inline double oracle_ratio(const std::string& prev, const std::string& curr) {
    const auto a = oracle_tokens(prev), b = oracle_tokens(curr);
    const auto longest = std::max(a.size(), b.size());
    return longest == 0 ? 1.0 : static_cast<double>(lcs_table(a, b)) / static_cast<double>(longest);
}

// The five answer-model outputs of the published qa3 trace.
inline const std::vector<std::string>& qa3_rounds() {
    static const std::vector<std::string> r{
        "The apple was at office. We need to find where the apple was before the office.",
        "The apple was at office. Mary put down the apple at office. We need to determine where Mary was before "
        "she placed the apple down.",
        "The apple was at office. Mary put down the apple at office, but before that, she was in the kitchen.",
        "Mary put down the apple at office, but before that, she was in the kitchen. The best answer to the "
        "question \"Where was the apple before the office?\" is:\n\nThe kitchen.",
        "Based on the given context, the best answer to the question \"Where was the apple before the office?\" "
        "is:\n\nThe kitchen."};
    return r;
}

inline const std::vector<std::string>& qa3_needles() {
    static const std::vector<std::string> n{
        "Daniel grabbed the milk.",       "Mary picked up the apple.",      "Sandra went back to the hallway.",
        "Daniel journeyed to the hallway.", "John moved to the bedroom.",     "John went to the bathroom.",
        "Daniel discarded the milk there.", "Mary moved to the kitchen.",     "Mary journeyed to the office.",
        "Daniel got the milk.",           "John moved to the garden.",      "Sandra travelled to the kitchen.",
        "Mary put down the apple.",       "John took the football."};
    return n;
}

// Per-test scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("ilmtr-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& body) {
    std::ofstream f(p, std::ios::binary);
    f << body;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Two disjoint vocabularies for clustering fixtures.
inline const std::vector<std::string>& vocabulary_a() {
    static const std::vector<std::string> v{"cow",    "barn",   "hay",    "tractor", "goat",    "fence",  "plough",
                                            "pasture", "sheep", "silo",   "harvest", "chicken", "trough", "pig",
                                            "farmer", "acre",   "barley", "stable",  "mule",    "orchard"};
    return v;
}
inline const std::vector<std::string>& vocabulary_b() {
    static const std::vector<std::string> v{"comet",  "nebula", "orbit",   "galaxy", "quasar",  "pulsar", "telescope",
                                            "planet", "meteor", "eclipse", "zenith", "asteroid", "cosmos", "nova",
                                            "parsec", "lunar",  "solar",   "crater", "aurora",  "photon"};
    return v;
}

// Twelve paragraphs of six 10-token sentences (9 words + '.'), paragraphs
// alternating A,B,A,B,... With chunk_max_tokens = 60 every paragraph is
// exactly one chunk.
inline std::string two_vocabulary_corpus(std::uint64_t seed = 7) {
    std::mt19937_64 gen(seed);
    std::string text;
    for (int p = 0; p < 12; ++p) {
        const auto& vocab = p % 2 == 0 ? vocabulary_a() : vocabulary_b();
        for (int s = 0; s < 6; ++s) {
            std::string sentence;
            for (int w = 0; w < 9; ++w) {
                if (w) sentence += ' ';
                sentence += vocab[gen() % vocab.size()];
            }
            sentence[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0])));
            if (!text.empty()) text += s == 0 ? "\n\n" : " ";
            text += sentence + ".";
        }
    }
    return text;
}

}  // namespace testing_support
