#include "ilmtr/cli.hpp"

#include "ilmtr/bench.hpp"
#include "ilmtr/inner_loop.hpp"
#include "ilmtr/mock_backends.hpp"
#include "ilmtr/openai_backend.hpp"
#include "ilmtr/retrieval_index.hpp"
#include "ilmtr/tree.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ilmtr {
namespace {

class CountingChat final : public ChatBackend {
public:
    explicit CountingChat(std::shared_ptr<ChatBackend> inner) : inner_(std::move(inner)) {}
    std::string chat(const ChatRequest& request) override {
        ++calls_;
        return inner_->chat(request);
    }
    std::size_t calls() const { return calls_.load(); }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::atomic<std::size_t> calls_{0};
};

// Failure carrying the exit status it maps to.
struct CliFailure {
    int code;
    std::string message;
};

std::string read_text(const std::filesystem::path& path, const char* what) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CliFailure{exit_code::input, std::string("cannot read ") + what + " " + path.string()};
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    bool mock = false;
    std::string mock_script;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "Config file (default: $ILMTR_CONFIG)");
    cmd->add_option("--set", c.overrides, "Override a config key, section.key=value")->allow_extra_args(false);
    cmd->add_flag("--mock", c.mock, "Use the offline mock backends");
}

RunConfig resolve_config(const Common& c) {
    try {
        std::string path = c.config_path;
        if (path.empty())
            if (const char* env = std::getenv("ILMTR_CONFIG"); env && *env) path = env;
        if (path.empty()) return parse_config("", c.overrides);
        return load_config(path, c.overrides);
    } catch (const ConfigError& e) {
        throw CliFailure{exit_code::input, std::string("config error (") + to_string(e.kind()) + "): " + e.what()};
    }
}

struct Session {
    Backends backends;
    std::shared_ptr<CountingChat> summary_counter, answer_counter;
    bool mock = false;

    std::size_t chat_calls() const {
        std::size_t n = summary_counter->calls();
        if (answer_counter != summary_counter) n += answer_counter->calls();
        return n;
    }
};

Session open_session(const RunConfig& config, const Common& c, const BackendFactory& factory) {
    BackendChoice choice;
    choice.mock = c.mock || !c.mock_script.empty();
    if (!c.mock_script.empty()) choice.script = c.mock_script;
    Session s;
    s.mock = choice.mock;
    Backends raw;
    try {
        raw = factory(config, choice);
    } catch (const CliFailure&) {
        throw;
    } catch (const std::exception& e) {
        throw CliFailure{exit_code::backend, std::string("cannot set up backends: ") + e.what()};
    }
    s.summary_counter = std::make_shared<CountingChat>(raw.summary);
    s.answer_counter =
        raw.answer == raw.summary ? s.summary_counter : std::make_shared<CountingChat>(raw.answer);
    s.backends = Backends{s.summary_counter, s.answer_counter, raw.embedding};
    return s;
}

void report_calls(const Session& s, std::ostream& err) {
    if (s.mock) err << "mock chat calls: " << s.chat_calls() << "\n";
}

void check_writable_file(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    std::error_code ec;
    const auto parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
    if (!fs::is_directory(parent, ec))
        throw CliFailure{exit_code::output, "index directory does not exist: " + parent.string()};
    if (fs::is_directory(path, ec)) throw CliFailure{exit_code::output, "index path is a directory: " + path.string()};
    auto probe = path;
    probe += ".probe";
    {
        std::ofstream f(probe, std::ios::binary | std::ios::trunc);
        if (!f) throw CliFailure{exit_code::output, "index path is not writable: " + path.string()};
    }
    fs::remove(probe, ec);
}

RetrievalIndex open_index(const std::string& path) {
    try {
        return load_index(path);
    } catch (const IndexFormatError& e) {
        throw CliFailure{exit_code::input, std::string("cannot load index: ") + e.what()};
    }
}

int cmd_build(const Common& c, const std::string& input, const std::string& index_path, bool plain,
              std::size_t threads, std::ostream& out, std::ostream& err, const BackendFactory& factory) {
    const auto config = resolve_config(c);
    const auto text = read_text(input, "input");
    check_writable_file(index_path);
    auto session = open_session(config, c, factory);

    BuildOptions options;
    options.dual_summaries = !plain;
    options.threads = std::max<std::size_t>(1, threads);
    Tree tree;
    try {
        tree = build_tree(text, config, *session.backends.summary, *session.backends.embedding, options);
    } catch (const std::invalid_argument& e) {
        report_calls(session, err);
        throw CliFailure{exit_code::input, std::string("build failed: ") + e.what()};
    } catch (const std::exception& e) {
        report_calls(session, err);
        throw CliFailure{exit_code::backend, std::string("build failed: ") + e.what()};
    }
    const auto sizes = tree.layer_sizes();
    const auto surprises = tree.surprise_count();
    const auto nodes = tree.nodes.size();
    RetrievalIndex index(std::move(tree));
    try {
        save_index(index, index_path);
    } catch (const std::exception& e) {
        throw CliFailure{exit_code::output, std::string("cannot write index: ") + e.what()};
    }
    out << "layer_sizes";
    for (auto n : sizes) out << ' ' << n;
    out << "\nsurprise_nodes " << surprises << "\nnodes " << nodes << "\nindex " << index_path << "\n";
    report_calls(session, err);
    return exit_code::ok;
}

int cmd_query(const Common& c, const std::string& index_path, const std::string& question, const std::string& mode,
              bool trace_flag, std::ostream& out, std::ostream& err, const BackendFactory& factory) {
    const auto parsed = parse_pipeline_mode(mode);
    if (!parsed) throw CliFailure{exit_code::usage, "unknown mode '" + mode + "' (expected single, no-loop or full)"};
    auto config = resolve_config(c);
    if (*parsed != PipelineMode::ilmtr_full) config.loop.max_rounds = 1;
    const auto index = open_index(index_path);
    auto session = open_session(config, c, factory);

    const auto trace = run_inner_loop(index, question, config, *session.backends.answer, *session.backends.embedding);
    if (trace_flag) {
        for (const auto& r : trace.rounds) {
            out << "round " << r.round << " ratio " << r.convergence_ratio << " retrieved";
            for (auto id : r.retrieved) out << ' ' << id;
            out << "\nstm:\n" << r.stm_text << "\n";
        }
        out << "converged " << (trace.converged ? "true" : "false") << "\n";
    }
    report_calls(session, err);
    if (trace.error)
        throw CliFailure{exit_code::backend,
                         "backend failure in round " + std::to_string(trace.error->round) + ": " + trace.error->message};
    out << trace.final_answer << "\n";
    return exit_code::ok;
}

int cmd_bench(const Common& c, const std::string& suite_path, const std::string& mode, const std::string& out_dir,
              std::size_t parallel, std::ostream& out, std::ostream& err, const BackendFactory& factory) {
    const auto parsed = parse_pipeline_mode(mode);
    if (!parsed) throw CliFailure{exit_code::usage, "unknown mode '" + mode + "' (expected single, no-loop or full)"};
    std::error_code ec;
    if (std::filesystem::exists(out_dir, ec) && !std::filesystem::is_directory(out_dir, ec))
        throw CliFailure{exit_code::output, "--out is not a directory: " + out_dir};
    const auto config = resolve_config(c);
    std::vector<NiahCase> suite;
    try {
        suite = load_suite(suite_path);
    } catch (const std::exception& e) {
        throw CliFailure{exit_code::input, std::string("suite error: ") + e.what()};
    }

    BenchOptions options;
    options.parallel = std::max<std::size_t>(1, parallel);
    if (!c.mock) {
        options.provider = [&](const NiahCase&) { return factory(config, BackendChoice{}); };
    }
    const auto results = run_bench(suite, *parsed, config, options);
    try {
        write_reports(results, out_dir);
    } catch (const std::exception& e) {
        throw CliFailure{exit_code::output, e.what()};
    }
    out << results_table(results);
    const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.error; });
    if (failed) {
        err << failed << " of " << results.size() << " cases failed; see " << out_dir << "/errors.csv\n";
        return exit_code::backend;
    }
    return exit_code::ok;
}

int cmd_inspect(const std::string& index_path, const std::optional<NodeId>& node, std::ostream& out) {
    const auto index = open_index(index_path);
    const auto& tree = index.tree();
    if (!node) {
        out << "layer_sizes";
        for (auto n : tree.layer_sizes()) out << ' ' << n;
        out << "\nsurprise_nodes " << tree.surprise_count() << "\nnodes " << tree.nodes.size() << "\ndim "
            << index.dim() << "\nroot_level " << tree.root_level << "\nseed " << tree.meta.seed << "\ndual_summaries "
            << (tree.meta.dual_summaries ? "true" : "false") << "\n";
        return exit_code::ok;
    }
    if (*node >= tree.nodes.size())
        throw CliFailure{exit_code::input, "no node " + std::to_string(*node) + " (index has " +
                                               std::to_string(tree.nodes.size()) + ")"};
    const auto& n = tree.node(*node);
    out << "id " << n.id << "\nlevel " << n.level << "\nkind " << to_string(n.kind) << "\ntokens " << n.token_count
        << "\nchildren";
    for (auto id : n.children) out << ' ' << id;
    out << "\nsibling " << (n.sibling ? std::to_string(*n.sibling) : "-") << "\ntext\n" << n.text << "\n";
    return exit_code::ok;
}

}  // namespace

std::vector<std::string> parse_mock_script(const std::string& text) {
    std::vector<std::string> replies;
    std::string current;
    std::istringstream in(text);
    std::string line;
    auto flush = [&] {
        const auto first = current.find_first_not_of(" \t\r\n");
        const auto last = current.find_last_not_of(" \t\r\n");
        replies.push_back(first == std::string::npos ? std::string() : current.substr(first, last - first + 1));
        current.clear();
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "---") {
            flush();
            continue;
        }
        current += line;
        current += '\n';
    }
    flush();
    return replies;
}

Backends default_backends(const RunConfig& config, const BackendChoice& choice) {
    if (choice.mock) {
        auto backends = make_mock_backends(config);
        if (choice.script)
            backends.answer =
                std::make_shared<ScriptedChatBackend>(parse_mock_script(read_text(*choice.script, "mock script")));
        return backends;
    }
    return Backends{std::make_shared<OpenAIChatBackend>(config.summary_endpoint),
                    std::make_shared<OpenAIChatBackend>(config.answer_endpoint),
                    std::make_shared<OpenAIEmbeddingBackend>(config.embedding_endpoint)};
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const BackendFactory& factory) {
    CLI::App app{"Tree retrieval with an inner query loop", "ilmtr"};
    app.require_subcommand(1, 1);

    Common common;
    std::string input, index_path, question, mode = "full", suite, out_dir;
    bool trace = false, plain = false;
    std::size_t parallel = 1, threads = 1;
    std::optional<NodeId> node;

    auto* build = app.add_subcommand("build", "Chunk, summarize and cluster a document into an index");
    add_common(build, common);
    build->add_option("--input", input, "Document to index")->required();
    build->add_option("--index", index_path, "Index file to write")->required();
    build->add_flag("--plain-summaries", plain, "Use the plain summary prompt (no surprise nodes)");
    build->add_option("--threads", threads, "Concurrent summary calls per layer");

    auto* query = app.add_subcommand("query", "Answer a question against an index");
    add_common(query, common);
    query->add_option("--index", index_path, "Index file")->required();
    query->add_option("--question", question, "Question text")->required();
    query->add_option("--mode", mode, "single, no-loop or full");
    query->add_flag("--trace", trace, "Print each round's memory and convergence ratio");
    query->add_option("--mock-script", common.mock_script, "Answer replies separated by --- lines (implies --mock)");

    auto* bench = app.add_subcommand("bench", "Run a benchmark suite");
    add_common(bench, common);
    bench->add_option("--suite", suite, "Suite file")->required();
    bench->add_option("--mode", mode, "single, no-loop or full");
    bench->add_option("--out", out_dir, "Report directory")->required();
    bench->add_option("--parallel", parallel, "Cases run concurrently");

    auto* inspect = app.add_subcommand("inspect", "Print index statistics or one node");
    inspect->add_option("--index", index_path, "Index file")->required();
    inspect->add_option("--node", node, "Node id");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_code::ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return exit_code::usage;
    }

    try {
        if (build->parsed())
            return cmd_build(common, input, index_path, plain, threads, out, err, factory);
        if (query->parsed())
            return cmd_query(common, index_path, question, mode, trace, out, err, factory);
        if (bench->parsed())
            return cmd_bench(common, suite, mode, out_dir, parallel, out, err, factory);
        return cmd_inspect(index_path, node, out);
    } catch (const CliFailure& f) {
        err << "error: " << f.message << "\n";
        return f.code;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::backend;
    }
}

}  // namespace ilmtr
