#include "ilmtr/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <system_error>

namespace ilmtr {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void malformed(const std::string& key, std::string_view value, const char* expected) {
    throw ConfigError(ConfigError::Kind::malformed,
                      "config key '" + key + "': expected " + expected + ", got '" + std::string(value) + "'");
}

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

double parse_double(const std::string& key, std::string_view v) {
    double out = 0;
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size()) malformed(key, v, "a number");
    return out;
}

template <typename Int>
Int parse_int(const std::string& key, std::string_view v) {
    Int out = 0;
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec == std::errc::result_out_of_range)
        throw ConfigError(ConfigError::Kind::out_of_range, "config key '" + key + "': integer overflow");
    if (ec != std::errc() || end != v.data() + v.size()) malformed(key, v, "an integer");
    return out;
}

bool parse_bool(const std::string& key, std::string_view v) {
    std::string lower(v);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "true" || lower == "1" || lower == "yes") return true;
    if (lower == "false" || lower == "0" || lower == "no") return false;
    malformed(key, v, "a boolean");
}

struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

template <typename Section, typename Value>
Field nested(std::string key, Section RunConfig::*section, Value Section::*field) {
    Field f;
    f.key = key;
    f.get = [section, field](const RunConfig& c) {
        const Value& v = (c.*section).*field;
        if constexpr (std::is_same_v<Value, std::string>) return v;
        else if constexpr (std::is_same_v<Value, bool>) return std::string(v ? "true" : "false");
        else if constexpr (std::is_floating_point_v<Value>) return format_double(v);
        else return std::to_string(v);
    };
    f.set = [section, field, key](RunConfig& c, std::string_view raw) {
        Value& v = (c.*section).*field;
        if constexpr (std::is_same_v<Value, std::string>) v = std::string(raw);
        else if constexpr (std::is_same_v<Value, bool>) v = parse_bool(key, raw);
        else if constexpr (std::is_floating_point_v<Value>) v = parse_double(key, raw);
        else v = parse_int<Value>(key, raw);
    };
    return f;
}

std::string join_patterns(const std::vector<std::string>& patterns) {
    std::string out;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        if (i) out += '|';
        out += patterns[i];
    }
    return out;
}

std::vector<std::string> split_patterns(std::string_view raw) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= raw.size()) {
        auto bar = raw.find('|', start);
        if (bar == std::string_view::npos) bar = raw.size();
        auto piece = trim(raw.substr(start, bar - start));
        if (!piece.empty()) out.emplace_back(piece);
        start = bar + 1;
    }
    return out;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        using R = RunConfig;
        std::vector<Field> t;
        t.push_back(nested("answer_model.url", &R::answer_endpoint, &EndpointParams::url));
        t.push_back(nested("answer_model.model", &R::answer_endpoint, &EndpointParams::model));
        t.push_back(nested("answer_model.api_key", &R::answer_endpoint, &EndpointParams::api_key));
        t.push_back(nested("answer_model.temperature", &R::answer, &AnswerModelParams::temperature));
        t.push_back(nested("answer_model.frequency_penalty", &R::answer, &AnswerModelParams::frequency_penalty));
        t.push_back(nested("answer_model.max_tokens", &R::answer, &AnswerModelParams::max_tokens));

        t.push_back(nested("summary_model.url", &R::summary_endpoint, &EndpointParams::url));
        t.push_back(nested("summary_model.model", &R::summary_endpoint, &EndpointParams::model));
        t.push_back(nested("summary_model.api_key", &R::summary_endpoint, &EndpointParams::api_key));
        using S = SummaryModelParams;
        t.push_back(nested("summary_model.temperature", &R::summary, &S::temperature));
        t.push_back(nested("summary_model.repeat_penalty", &R::summary, &S::repeat_penalty));
        t.push_back(nested("summary_model.repeat_last_n", &R::summary, &S::repeat_last_n));
        t.push_back(nested("summary_model.top_k", &R::summary, &S::top_k));
        t.push_back(nested("summary_model.top_p", &R::summary, &S::top_p));
        t.push_back(nested("summary_model.min_p", &R::summary, &S::min_p));
        t.push_back(nested("summary_model.n_predict", &R::summary, &S::n_predict));
        t.push_back(nested("summary_model.n_probs", &R::summary, &S::n_probs));
        t.push_back(nested("summary_model.typical_p", &R::summary, &S::typical_p));
        t.push_back(nested("summary_model.tfs_z", &R::summary, &S::tfs_z));
        t.push_back(nested("summary_model.mirostat", &R::summary, &S::mirostat));
        t.push_back(nested("summary_model.mirostat_eta", &R::summary, &S::mirostat_eta));
        t.push_back(nested("summary_model.mirostat_tau", &R::summary, &S::mirostat_tau));
        t.push_back(nested("summary_model.presence_penalty", &R::summary, &S::presence_penalty));
        t.push_back(nested("summary_model.frequency_penalty", &R::summary, &S::frequency_penalty));
        t.push_back(nested("summary_model.penalize_newline", &R::summary, &S::penalize_newline));

        t.push_back(nested("embedding.url", &R::embedding_endpoint, &EndpointParams::url));
        t.push_back(nested("embedding.model", &R::embedding_endpoint, &EndpointParams::model));
        t.push_back(nested("embedding.api_key", &R::embedding_endpoint, &EndpointParams::api_key));

        using P = RetrieverParams;
        t.push_back(nested("retriever.chunk_max_tokens", &R::retriever, &P::chunk_max_tokens));
        t.push_back(nested("retriever.summary_max_tokens", &R::retriever, &P::summary_max_tokens));
        t.push_back(nested("retriever.retrieval_top_k", &R::retriever, &P::retrieval_top_k));
        t.push_back(nested("retriever.retrieval_token_budget", &R::retriever, &P::retrieval_token_budget));
        t.push_back(nested("retriever.min_layer_size", &R::retriever, &P::min_layer_size));
        t.push_back(nested("retriever.soft_assign_threshold", &R::retriever, &P::soft_assign_threshold));
        t.push_back(nested("retriever.bic_k_max", &R::retriever, &P::bic_k_max));
        t.push_back(nested("retriever.rng_seed", &R::retriever, &P::rng_seed));

        t.push_back(nested("loop.max_rounds", &R::loop, &LoopParams::max_rounds));
        t.push_back(nested("loop.convergence_threshold", &R::loop, &LoopParams::convergence_threshold));
        Field granularity;
        granularity.key = "loop.lcs_granularity";
        granularity.get = [](const RunConfig& c) {
            return std::string(c.loop.lcs_granularity == LcsGranularity::word ? "word" : "character");
        };
        granularity.set = [](RunConfig& c, std::string_view raw) {
            if (raw == "word") c.loop.lcs_granularity = LcsGranularity::word;
            else if (raw == "character") c.loop.lcs_granularity = LcsGranularity::character;
            else malformed("loop.lcs_granularity", raw, "'word' or 'character'");
        };
        t.push_back(std::move(granularity));

        Field patterns;
        patterns.key = "mock.needle_patterns";
        patterns.get = [](const RunConfig& c) { return join_patterns(c.mock.needle_patterns); };
        patterns.set = [](RunConfig& c, std::string_view raw) { c.mock.needle_patterns = split_patterns(raw); };
        t.push_back(std::move(patterns));
        return t;
    }();
    return table;
}

const Field* find_field(std::string_view key) {
    for (const auto& f : fields())
        if (f.key == key) return &f;
    return nullptr;
}

void assign(RunConfig& config, const std::string& key, std::string_view value) {
    const Field* f = find_field(key);
    if (!f) throw ConfigError(ConfigError::Kind::unknown_key, "unknown config key '" + key + "'");
    f->set(config, value);
}

[[noreturn]] void out_of_range(const std::string& what) {
    throw ConfigError(ConfigError::Kind::out_of_range, "config value out of range: " + what);
}

}  // namespace

const char* to_string(ConfigError::Kind kind) {
    switch (kind) {
        case ConfigError::Kind::missing_file: return "missing-file";
        case ConfigError::Kind::malformed: return "malformed";
        case ConfigError::Kind::unknown_key: return "unknown-key";
        case ConfigError::Kind::out_of_range: return "out-of-range";
    }
    return "?";
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

void validate(const RunConfig& c) {
    if (c.answer.max_tokens <= 0) out_of_range("answer_model.max_tokens must be > 0");
    if (c.answer.temperature < 0) out_of_range("answer_model.temperature must be >= 0");
    if (c.summary.temperature < 0) out_of_range("summary_model.temperature must be >= 0");
    if (c.summary.n_predict <= 0) out_of_range("summary_model.n_predict must be > 0");
    if (!(c.summary.top_p > 0 && c.summary.top_p <= 1)) out_of_range("summary_model.top_p must be in (0,1]");
    if (c.summary.top_k < 0) out_of_range("summary_model.top_k must be >= 0");

    const auto& r = c.retriever;
    if (r.summary_max_tokens <= 0) out_of_range("retriever.summary_max_tokens must be > 0");
    if (r.chunk_max_tokens <= r.summary_max_tokens)
        out_of_range("retriever.chunk_max_tokens must exceed retriever.summary_max_tokens");
    if (r.retrieval_top_k < 1) out_of_range("retriever.retrieval_top_k must be >= 1");
    if (r.retrieval_token_budget < 0) out_of_range("retriever.retrieval_token_budget must be >= 0");
    if (r.min_layer_size < 1) out_of_range("retriever.min_layer_size must be >= 1");
    if (!(r.soft_assign_threshold > 0 && r.soft_assign_threshold < 1))
        out_of_range("retriever.soft_assign_threshold must be in (0,1)");
    if (r.bic_k_max < 1) out_of_range("retriever.bic_k_max must be >= 1");

    if (c.loop.max_rounds < 1) out_of_range("loop.max_rounds must be >= 1");
    if (!(c.loop.convergence_threshold > 0 && c.loop.convergence_threshold <= 1))
        out_of_range("loop.convergence_threshold must be in (0,1]");
}

RunConfig parse_config(std::string_view text, const std::vector<std::string>& overrides) {
    RunConfig config;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ConfigError(ConfigError::Kind::malformed,
                                  "line " + std::to_string(line_no) + ": bad section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(ConfigError::Kind::malformed,
                              "line " + std::to_string(line_no) + ": expected 'key = value'");
        std::string key(trim(line.substr(0, eq)));
        if (key.empty())
            throw ConfigError(ConfigError::Kind::malformed, "line " + std::to_string(line_no) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        assign(config, key, trim(line.substr(eq + 1)));
    }
    for (const auto& o : overrides) {
        auto eq = o.find('=');
        if (eq == std::string::npos)
            throw ConfigError(ConfigError::Kind::malformed, "override '" + o + "' is not key=value");
        assign(config, std::string(trim(std::string_view(o).substr(0, eq))),
               trim(std::string_view(o).substr(eq + 1)));
    }
    validate(config);
    return config;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(ConfigError::Kind::missing_file, "cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), overrides);
}

std::string serialize_config(const RunConfig& config) {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        auto dot = f.key.find('.');
        auto sec = f.key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out += '\n';
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += f.key.substr(dot + 1) + " = " + f.get(config) + "\n";
    }
    return out;
}

}  // namespace ilmtr
