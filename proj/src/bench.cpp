#include "ilmtr/bench.hpp"

#include "ilmtr/babilong.hpp"
#include "ilmtr/chunker.hpp"
#include "ilmtr/inner_loop.hpp"
#include "ilmtr/mock_backends.hpp"
#include "ilmtr/retrieval_index.hpp"
#include "ilmtr/rng.hpp"
#include "ilmtr/tree.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

namespace ilmtr {
namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto end = s.find(sep, start);
        if (end == std::string_view::npos) end = s.size();
        const auto item = trim(s.substr(start, end - start));
        if (!item.empty()) out.emplace_back(item);
        start = end + 1;
    }
    return out;
}

std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

constexpr std::array<const char*, 16> kSubjects{
    "The old ferry",        "A quiet orchard",     "The northern canal", "The village council",
    "The lighthouse keeper", "A wandering surveyor", "The river barge",   "The harbor master",
    "A traveling merchant", "The mountain railway", "The weaving guild",  "The parish clerk",
    "A shepherd from the valley", "The copper smith", "The young cartographer", "The market warden"};
constexpr std::array<const char*, 14> kVerbs{
    "crossed",   "surveyed", "repaired", "described", "measured", "painted",   "recorded",
    "visited",   "followed", "mapped",   "guarded",   "cleaned",  "inspected", "sketched"};
constexpr std::array<const char*, 16> kObjects{
    "the limestone bridge", "the copper mill",   "the salt marsh",     "the eastern ridge",
    "the weather station",  "the granary",       "the cobbled square", "the reed beds",
    "the tin mine",         "the chapel tower",  "the flooded meadow", "the toll road",
    "the stone quay",       "the beech forest",  "the signal house",   "the lower locks"};
constexpr std::array<const char*, 12> kTails{
    "before the autumn rains",      "during a windy afternoon", "while the bells rang",
    "after the spring fair",        "under a grey sky",         "as the fog lifted",
    "without much fuss",            "for the third season running", "at dawn",
    "with two borrowed lanterns",   "despite the frost",        "on the longest day of the year"};
constexpr std::array<const char*, 8> kAsides{
    "Nobody in town remembered a colder winter.",
    "The ledgers from that year were later lost in a flood.",
    "Travelers often stopped there to rest their horses.",
    "Children counted the boats from the harbor wall.",
    "The road north was closed for most of the month.",
    "A new clock was fitted above the town hall.",
    "Wool prices rose sharply that season.",
    "The schoolhouse roof was finally mended."};

// Pizza-flavoured sentences that never mention a secret ingredient.
constexpr std::array<const char*, 10> kDistractors{
    "What is the first rule of each pizza oven?",
    "The first letter of the pizza menu was painted by hand.",
    "Each cook needed a day to build the pizza oven.",
    "The perfect pizza oven is built of river stone.",
    "What each pizza maker needed first was a steady fire.",
    "A letter from the pizza guild praised the perfect crust.",
    "Each pizza needed to rest before it went into the oven.",
    "To build a perfect fire is the first lesson of the pizza kitchen.",
    "What is needed for a pizza oven is patience.",
    "The first pizza of each evening went to the baker's family."};

template <std::size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& from) {
    return from[rng.below(N)];
}

std::string filler_sentence(Rng& rng) {
    if (rng.below(6) == 0) return pick(rng, kAsides);
    return std::string(pick(rng, kSubjects)) + " " + pick(rng, kVerbs) + " " + pick(rng, kObjects) + " " +
           pick(rng, kTails) + ".";
}

}  // namespace

const std::vector<std::string>& pizza_needles() {
    static const std::vector<std::string> needles{
        "Figs are one of the secret ingredients needed to build the perfect pizza.",
        "Prosciutto is one of the secret ingredients needed to build the perfect pizza.",
        "Goat cheese is one of the secret ingredients needed to build the perfect pizza.",
    };
    return needles;
}

const std::vector<std::string>& pizza_keywords() {
    static const std::vector<std::string> keywords{"Figs", "Prosciutto", "Goat cheese"};
    return keywords;
}

std::vector<std::string> truncate_corpus(std::string_view corpus, std::size_t target_tokens) {
    const auto available = count_tokens(corpus);
    if (available < target_tokens)
        throw BenchError("corpus too short: " + std::to_string(available) + " tokens, need " +
                         std::to_string(target_tokens));
    std::vector<std::string> kept;
    std::size_t total = 0;
    for (auto& s : split_sentences(corpus)) {
        const auto n = count_tokens(s);
        if (total + n > target_tokens) break;
        total += n;
        kept.push_back(std::move(s));
    }
    if (kept.empty()) throw BenchError("corpus too short: no whole sentence fits in the target length");
    return kept;
}

NiahCase insert_needles(const std::vector<std::string>& filler, const std::vector<std::string>& needles,
                        const std::vector<std::size_t>& boundaries) {
    if (needles.empty()) throw BenchError("no needles to insert");
    if (boundaries.size() != needles.size()) throw BenchError("one boundary per needle is required");
    if (!std::is_sorted(boundaries.begin(), boundaries.end()) || boundaries.back() > filler.size())
        throw BenchError("needle boundaries out of order or out of range");

    NiahCase c;
    c.needles = needles;
    c.filler = join(filler, " ");
    std::vector<std::string> all;
    std::size_t offset = 0, next = 0;
    for (std::size_t i = 0; i <= filler.size(); ++i) {
        while (next < needles.size() && boundaries[next] == i) {
            c.insertion_offsets.push_back(offset);
            c.needle_sentence_indices.push_back(all.size());
            offset += count_tokens(needles[next]);
            all.push_back(needles[next++]);
        }
        if (i == filler.size()) break;
        const auto n = count_tokens(filler[i]);
        c.haystack_tokens += n;
        offset += n;
        all.push_back(filler[i]);
    }
    c.text = join(all, " ");
    return c;
}

NiahCase generate_niah_case(std::string_view corpus, const std::vector<std::string>& needles, double depth_percent,
                            std::size_t target_tokens, std::uint64_t seed) {
    if (!(depth_percent >= 0.0 && depth_percent <= 100.0))
        throw BenchError("depth percent must be within [0, 100], got " + format_number(depth_percent));
    if (needles.empty()) throw BenchError("no needles to insert");
    const auto filler = truncate_corpus(corpus, target_tokens);
    const std::size_t m = needles.size();
    const std::size_t boundaries = filler.size() + 1;
    // With one filler sentence between needles, needle i sits at boundary
    // start + i; fall back to stacking them when the filler is tiny.
    const std::size_t stride = boundaries >= m ? 1 : 0;
    const std::size_t last_start = stride ? boundaries - m : 0;

    std::vector<std::size_t> prefix(filler.size() + 1, 0);
    for (std::size_t i = 0; i < filler.size(); ++i) prefix[i + 1] = prefix[i] + count_tokens(filler[i]);
    std::vector<std::size_t> needle_tokens;
    for (const auto& n : needles) needle_tokens.push_back(count_tokens(n));

    const double target = depth_percent / 100.0 * static_cast<double>(prefix.back());
    std::size_t best = 0;
    double best_err = INFINITY;
    for (std::size_t start = 0; start <= last_start; ++start) {
        double sum = 0.0;
        std::size_t before = 0;
        for (std::size_t i = 0; i < m; ++i) {
            sum += static_cast<double>(prefix[start + i * stride] + before);
            before += needle_tokens[i];
        }
        const double err = std::abs(sum / static_cast<double>(m) - target);
        if (err < best_err) {
            best_err = err;
            best = start;
        }
    }
    std::vector<std::size_t> at;
    for (std::size_t i = 0; i < m; ++i) at.push_back(best + i * stride);

    auto c = insert_needles(filler, needles, at);
    c.id = "niah-" + std::to_string(target_tokens) + "-d" + format_number(depth_percent) + "-s" + std::to_string(seed);
    c.target_tokens = target_tokens;
    c.depth_percent = depth_percent;
    return c;
}

int score_niah(std::string_view answer, const std::vector<std::string>& expected_keywords) {
    if (expected_keywords.empty()) throw BenchError("score_niah needs at least one keyword");
    const auto haystack = lower(answer);
    std::size_t found = 0;
    for (const auto& k : expected_keywords)
        if (haystack.find(lower(k)) != std::string::npos) ++found;
    const std::size_t n = expected_keywords.size();
    if (found == 0) return 1;
    if (found == n) return 10;
    // Compare found/n with 1/3 and 2/3 without rounding: 3*found vs n and 2n.
    const auto d3 = std::abs(static_cast<long long>(3 * found) - static_cast<long long>(n));
    const auto d7 = std::abs(static_cast<long long>(3 * found) - static_cast<long long>(2 * n));
    return d3 <= d7 ? 3 : 7;
}

std::string synthetic_filler(std::size_t min_tokens, std::uint64_t seed, double distractor_rate) {
    Rng rng(seed);
    std::string out;
    std::size_t tokens = 0;
    while (tokens < min_tokens) {
        const bool distract = distractor_rate > 0.0 && rng.uniform() < distractor_rate;
        const std::size_t len = 6 + rng.below(5);
        std::string para;
        for (std::size_t i = 0; i < len; ++i) {
            const std::string s = distract ? std::string(pick(rng, kDistractors)) : filler_sentence(rng);
            if (!para.empty()) para += ' ';
            para += s;
            tokens += count_tokens(s);
        }
        if (!out.empty()) out += "\n\n";
        out += para;
    }
    return out;
}

const char* to_string(PipelineMode mode) {
    switch (mode) {
        case PipelineMode::baseline_single_shot: return "baseline_single_shot";
        case PipelineMode::ilmtr_no_loop: return "ilmtr_no_loop";
        case PipelineMode::ilmtr_full: return "ilmtr_full";
    }
    return "?";
}

std::optional<PipelineMode> parse_pipeline_mode(std::string_view text) {
    if (text == "single" || text == "baseline" || text == "baseline_single_shot")
        return PipelineMode::baseline_single_shot;
    if (text == "no-loop" || text == "ilmtr_no_loop") return PipelineMode::ilmtr_no_loop;
    if (text == "full" || text == "ilmtr_full") return PipelineMode::ilmtr_full;
    return std::nullopt;
}

Backends mock_backends_for(const NiahCase& c) {
    auto chat = std::make_shared<ExtractiveChatBackend>(c.needles);
    return Backends{chat, chat, std::make_shared<HashedBagOfWordsEmbedding>()};
}

BenchResult run_case(const NiahCase& c, PipelineMode mode, const RunConfig& config, const Backends& backends) {
    const auto start = std::chrono::steady_clock::now();
    BenchResult r;
    r.case_id = c.id;
    r.mode = mode;
    r.tokens = c.target_tokens;
    r.depth_percent = c.depth_percent;
    try {
        BuildOptions options;
        options.dual_summaries = mode != PipelineMode::baseline_single_shot;
        RetrievalIndex index(build_tree(c.text, config, *backends.summary, *backends.embedding, options));
        RunConfig rc = config;
        if (mode != PipelineMode::ilmtr_full) rc.loop.max_rounds = 1;
        const auto trace = run_inner_loop(index, c.question, rc, *backends.answer, *backends.embedding);
        r.rounds_used = static_cast<int>(trace.rounds.size());
        r.answer = trace.final_answer;
        if (trace.error) r.error = "round " + std::to_string(trace.error->round) + ": " + trace.error->message;
        r.score = score_niah(r.answer, c.expected_keywords);
    } catch (const std::exception& e) {
        r.error = e.what();
        r.score = 1;
    }
    r.wall_time =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    return r;
}

std::vector<BenchResult> run_bench(const std::vector<NiahCase>& suite, PipelineMode mode, const RunConfig& config,
                                   const BenchOptions& options) {
    std::vector<BenchResult> results(suite.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < suite.size(); i = next++) {
            try {
                results[i] = run_case(suite[i], mode, config, options.provider(suite[i]));
            } catch (const std::exception& e) {
                results[i].case_id = suite[i].id;
                results[i].mode = mode;
                results[i].tokens = suite[i].target_tokens;
                results[i].depth_percent = suite[i].depth_percent;
                results[i].error = e.what();
            }
        }
    };
    const std::size_t n = std::clamp<std::size_t>(options.parallel, 1, std::max<std::size_t>(1, suite.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return results;
}

std::string results_table(const std::vector<BenchResult>& results) {
    std::string out = "case_id,mode,tokens,depth,score,rounds,ms\n";
    for (const auto& r : results) {
        out += r.case_id + "," + to_string(r.mode) + "," + std::to_string(r.tokens) + "," +
               format_number(r.depth_percent) + "," + std::to_string(r.score) + "," + std::to_string(r.rounds_used) +
               "," + std::to_string(r.wall_time.count()) + "\n";
    }
    return out;
}

std::string score_grid(const std::vector<BenchResult>& results) {
    std::map<std::pair<std::size_t, double>, std::pair<double, std::size_t>> cells;
    for (const auto& r : results) {
        const double depth = std::round(r.depth_percent * 10.0) / 10.0;
        auto& cell = cells[{r.tokens, depth}];
        cell.first += r.score;
        ++cell.second;
    }
    std::string out = "tokens,depth,mean_score\n";
    for (const auto& [key, cell] : cells)
        out += std::to_string(key.first) + "," + format_number(key.second) + "," +
               format_number(cell.first / static_cast<double>(cell.second)) + "\n";
    return out;
}

std::string error_table(const std::vector<BenchResult>& results) {
    std::string out = "case_id,mode,error\n";
    for (const auto& r : results) {
        if (!r.error) continue;
        std::string msg = *r.error;
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::replace(msg.begin(), msg.end(), ',', ';');
        out += r.case_id + "," + to_string(r.mode) + "," + msg + "\n";
    }
    return out;
}

void write_reports(const std::vector<BenchResult>& results, const std::filesystem::path& dir) {
    std::error_code ec;
    if (std::filesystem::exists(dir, ec) && !std::filesystem::is_directory(dir, ec))
        throw BenchError("output path is not a directory: " + dir.string());
    std::filesystem::create_directories(dir, ec);
    if (ec) throw BenchError("cannot create output directory " + dir.string() + ": " + ec.message());
    const std::pair<const char*, std::string> files[] = {
        {"results.csv", results_table(results)},
        {"grid.csv", score_grid(results)},
        {"errors.csv", error_table(results)},
    };
    for (const auto& [name, body] : files) {
        std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
        f << body;
        if (!f) throw BenchError("cannot write " + (dir / name).string());
    }
}

namespace {

struct Section {
    std::string name;
    std::size_t line = 0;
    std::map<std::string, std::string> values;
};

std::vector<Section> parse_sections(std::string_view text) {
    std::vector<Section> sections;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw BenchError("suite line " + std::to_string(line_no) + ": bad section header");
            Section s;
            s.name = std::string(trim(line.substr(1, line.size() - 2)));
            s.line = line_no;
            if (s.name != "niah" && s.name != "babilong")
                throw BenchError("suite line " + std::to_string(line_no) + ": unknown section [" + s.name + "]");
            sections.push_back(std::move(s));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw BenchError("suite line " + std::to_string(line_no) + ": expected key = value");
        if (sections.empty())
            throw BenchError("suite line " + std::to_string(line_no) + ": key outside of a section");
        sections.back().values[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
    }
    return sections;
}

template <typename T>
T parse_number(const std::string& key, std::string_view v) {
    T out{};
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size())
        throw BenchError("suite key '" + key + "': not a number: '" + std::string(v) + "'");
    return out;
}

template <typename T>
std::vector<T> number_list(const std::string& key, const std::string& v) {
    std::vector<T> out;
    for (const auto& item : split_list(v, ',')) out.push_back(parse_number<T>(key, item));
    return out;
}

class SectionReader {
public:
    explicit SectionReader(Section s) : s_(std::move(s)) {}

    std::optional<std::string> take(const std::string& key) {
        auto it = s_.values.find(key);
        if (it == s_.values.end()) return std::nullopt;
        auto v = it->second;
        s_.values.erase(it);
        return v;
    }
    void finish() const {
        if (!s_.values.empty())
            throw BenchError("suite section [" + s_.name + "] at line " + std::to_string(s_.line) +
                             ": unknown key '" + s_.values.begin()->first + "'");
    }

private:
    Section s_;
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw BenchError("cannot read filler file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string section_filler(SectionReader& r, const std::filesystem::path& base_dir, std::uint64_t seed,
                           std::size_t max_tokens) {
    const auto rate = r.take("distractor_rate");
    const double distractors = rate ? parse_number<double>("distractor_rate", *rate) : 0.0;
    if (distractors < 0.0 || distractors > 1.0) throw BenchError("suite key 'distractor_rate' must be in [0, 1]");
    if (auto path = r.take("filler")) {
        std::filesystem::path p(*path);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        return read_file(p);
    }
    return synthetic_filler(std::max(kSyntheticFillerTokens, max_tokens + 1000), seed, distractors);
}

}  // namespace

std::vector<NiahCase> parse_suite(std::string_view text, const std::filesystem::path& base_dir) {
    std::vector<NiahCase> cases;
    for (auto& section : parse_sections(text)) {
        const bool niah = section.name == "niah";
        SectionReader r(std::move(section));
        const auto seed_text = r.take("seed");
        const std::uint64_t seed = seed_text ? parse_number<std::uint64_t>("seed", *seed_text) : 42;
        const auto tokens_text = r.take("tokens");
        const auto tokens =
            tokens_text ? number_list<std::size_t>("tokens", *tokens_text) : std::vector<std::size_t>{10000, 20000, 50000};
        const std::size_t max_tokens = tokens.empty() ? 0 : *std::max_element(tokens.begin(), tokens.end());

        if (niah) {
            const auto depths_text = r.take("depths");
            const auto depths = depths_text ? number_list<double>("depths", *depths_text)
                                            : std::vector<double>{0, 25, 50, 75, 100};
            const auto needles_text = r.take("needles");
            const auto keywords_text = r.take("keywords");
            const auto question = r.take("question");
            if (needles_text && !keywords_text) throw BenchError("suite [niah]: custom needles need keywords");
            const auto needles = needles_text ? split_list(*needles_text, '|') : pizza_needles();
            const auto keywords = keywords_text ? split_list(*keywords_text, '|') : pizza_keywords();
            if (needles.empty() || keywords.empty()) throw BenchError("suite [niah]: needles and keywords must be non-empty");
            const auto filler = section_filler(r, base_dir, seed, max_tokens);
            r.finish();
            for (auto t : tokens) {
                for (auto d : depths) {
                    auto c = generate_niah_case(filler, needles, d, t, seed);
                    c.question = question ? *question : std::string(kPizzaQuestion);
                    c.expected_keywords = keywords;
                    cases.push_back(std::move(c));
                }
            }
        } else {
            const auto tasks_text = r.take("tasks");
            std::vector<BabiTask> tasks;
            for (const auto& name : split_list(tasks_text ? *tasks_text : "qa1,qa2,qa3,qa4,qa5", ',')) {
                auto t = parse_babi_task(name);
                if (!t) throw BenchError("suite [babilong]: unknown task '" + name + "'");
                tasks.push_back(*t);
            }
            const auto count_text = r.take("cases");
            const std::size_t count = count_text ? parse_number<std::size_t>("cases", *count_text) : 10;
            const auto filler = section_filler(r, base_dir, seed, max_tokens);
            r.finish();
            for (auto task : tasks)
                for (auto t : tokens)
                    for (std::size_t i = 0; i < count; ++i)
                        cases.push_back(generate_babilong_like(task, filler, t, seed + i));
        }
    }
    return cases;
}

std::vector<NiahCase> load_suite(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw BenchError("cannot read suite file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_suite(ss.str(), path.parent_path());
}

}  // namespace ilmtr
