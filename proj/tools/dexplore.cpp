// SPDX-License-Identifier: Apache-2.0
// dexplore: headless exploration runner and HTTP service.

#include <dex/agent.hpp>
#include <dex/server.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kExitDone = 0;
constexpr int kExitFailed = 1;
constexpr int kExitDegraded = 2;
constexpr int kExitUsage = 64;
constexpr int kExitFile = 66;

struct FileError: std::runtime_error
{
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FileError("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text))
        throw FileError("cannot write " + path);
}

struct RemoteFlags
{
    std::string policy_url;
    std::string policy_model = "gpt-4o-mini";
    std::string policy_key_env = "DEX_POLICY_API_KEY";
    std::string embed_url;
    std::string embed_model = "text-embedding-3-small";
    std::string embed_key_env = "DEX_EMBED_API_KEY";

    void attach(CLI::App& app)
    {
        app.add_option("--policy-url", policy_url, "Chat-completion endpoint for the remote policy");
        app.add_option("--policy-model", policy_model, "Model name sent to the policy endpoint")->capture_default_str();
        app.add_option("--policy-key-env", policy_key_env, "Environment variable holding the policy API key")
            ->capture_default_str();
        app.add_option("--embed-url", embed_url, "Embedding endpoint (local hashed embeddings when omitted)");
        app.add_option("--embed-model", embed_model, "Embedding model name")->capture_default_str();
        app.add_option("--embed-key-env", embed_key_env, "Environment variable holding the embedding API key")
            ->capture_default_str();
    }

    std::optional<dex::RemoteEmbeddingOptions> embeddings() const
    {
        if (embed_url.empty())
            return std::nullopt;
        return dex::RemoteEmbeddingOptions {embed_url, embed_model, embed_key_env, 60};
    }
};

struct ExploreFlags
{
    std::string data;
    std::string question;
    std::string policy = "scripted:";
    std::uint64_t seed = 0x5EED5EEDULL;
    std::size_t k = 10;
    std::size_t k_prime = 50;
    std::size_t max_steps = 8;
    std::string config;
    std::string out;
    std::string trace;
    std::string markdown;
    bool quiet = false;
};

int explore(const ExploreFlags& f, const RemoteFlags& remote)
{
    const auto dataset = dex::load_csv(read_file(f.data));

    dex::SessionConfig config;
    if (!f.config.empty())
        config = dex::apply_overrides(config, nlohmann::json::parse(read_file(f.config)));
    config.seed = f.seed;
    config.top_k = f.k;
    config.top_k_prime = f.k_prime;
    config.max_steps = f.max_steps;

    if (f.policy == "remote")
    {
        config.policy.kind = dex::PolicySpec::Kind::Remote;
        config.policy.url = remote.policy_url;
        config.policy.model = remote.policy_model;
        config.policy.key_env = remote.policy_key_env;
    }
    else if (f.policy.starts_with("scripted:"))
    {
        const auto path = f.policy.substr(9);
        config.policy.kind = dex::PolicySpec::Kind::Scripted;
        config.policy.script = path.empty() ? nlohmann::json::array() : nlohmann::json::parse(read_file(path));
    }
    else
        throw CLI::ValidationError("--policy", "expected scripted:<path> or remote");

    config.validate();
    auto policy = dex::make_policy(config.policy);
    std::unique_ptr<dex::EmbeddingProvider> embed;
    if (auto opts = remote.embeddings())
        embed = std::make_unique<dex::RemoteEmbedding>(*opts);
    else
        embed = std::make_unique<dex::LocalEmbedding>();

    const auto outcome = dex::run_session(dataset, f.question, config, *policy, *embed);
    const auto report_text = dex::to_json(outcome.report).dump(2);
    if (!f.out.empty())
        write_file(f.out, report_text);
    if (!f.trace.empty())
        write_file(f.trace, dex::trace_text(outcome.trace));
    if (!f.markdown.empty())
        write_file(f.markdown, dex::report_markdown(outcome.report));

    if (!f.quiet)
    {
        std::cout << outcome.report.narrative << "\n\n";
        for (const auto& item: outcome.report.insights)
            std::cout << item.rank << ". [" << dex::insight_type_name(item.insight.type) << "] " << item.insight.text
                      << "\n";
        std::cout << "\nstatus: " << dex::status_name(outcome.status)
                  << ", termination: " << dex::termination_name(outcome.sequence.terminated)
                  << ", steps: " << outcome.sequence.steps.size() << "\n";
    }
    return outcome.status == dex::SessionStatus::Done ? kExitDone : kExitDegraded;
}

int schema(const std::string& path)
{
    const auto dataset = dex::load_csv(read_file(path));
    std::cout << dex::schema_json(dataset).dump(2) << "\n";
    return kExitDone;
}

int list_initial(const std::string& path, std::size_t limit)
{
    const auto dataset = dex::load_csv(read_file(path));
    dex::EnumLimits limits;
    limits.max_outputs = limit;
    const auto result = dex::init({dataset, limits, {}, nullptr});
    for (std::size_t i = 0; i < result.outputs.size(); ++i)
    {
        const auto& ins = result.outputs[i];
        std::printf("%3zu  %.4f  %-12s %s\n", i + 1, ins.score, std::string(dex::insight_type_name(ins.type)).c_str(),
                    ins.text.c_str());
    }
    if (!result.note.empty())
        std::cout << result.note << "\n";
    return kExitDone;
}

dex::Server* g_server = nullptr;

void on_signal(int)
{
    if (g_server)
        g_server->stop();
}

struct ServeFlags
{
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t max_upload_mb = 50;
    int long_poll = 10;
    std::string scratch_dir;
    std::vector<std::string> preload;
};

int serve(const ServeFlags& f, const RemoteFlags& remote)
{
    dex::ServerOptions options;
    options.max_upload_bytes = f.max_upload_mb * 1024 * 1024;
    options.long_poll_seconds = f.long_poll;
    options.scratch_dir = f.scratch_dir;
    options.remote_policy.url = remote.policy_url;
    options.remote_policy.model = remote.policy_model;
    options.remote_policy.key_env = remote.policy_key_env;
    options.embeddings = remote.embeddings();

    dex::Server server(options);
    for (const auto& path: f.preload)
    {
        auto ds = std::make_shared<const dex::Dataset>(dex::load_csv(read_file(path)));
        std::cerr << "loaded " << path << " as " << server.add_dataset(ds) << "\n";
    }
    if (!server.bind(f.host, f.port))
    {
        std::cerr << "cannot bind " << f.host << ":" << f.port << "\n";
        return kExitFailed;
    }
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on http://" << f.host << ":" << f.port << "\n";
    server.listen_after_bind();
    g_server = nullptr;
    return kExitDone;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app {"Agent-driven exploratory data analysis"};
    app.require_subcommand(1);

    RemoteFlags remote;
    ExploreFlags ex;
    auto* explore_cmd = app.add_subcommand("explore", "Run one exploration session");
    explore_cmd->add_option("--data", ex.data, "CSV file")->required();
    explore_cmd->add_option("--question", ex.question, "Question to explore")->required();
    explore_cmd->add_option("--policy", ex.policy, "scripted:<script.json> or remote")->capture_default_str();
    explore_cmd->add_option("--seed", ex.seed, "Detector seed");
    explore_cmd->add_option("--k", ex.k, "Report size K")->capture_default_str();
    explore_cmd->add_option("--k-prime", ex.k_prime, "Similarity survivors K'")->capture_default_str();
    explore_cmd->add_option("--max-steps", ex.max_steps, "Step budget")->capture_default_str();
    explore_cmd->add_option("--config", ex.config, "JSON file with session config overrides");
    explore_cmd->add_option("--out", ex.out, "Write the report JSON here");
    explore_cmd->add_option("--trace", ex.trace, "Write the JSON-lines trace here");
    explore_cmd->add_option("--markdown", ex.markdown, "Write a Markdown report here");
    explore_cmd->add_flag("--quiet", ex.quiet, "Do not print the narrative");
    remote.attach(*explore_cmd);

    std::string schema_path;
    auto* schema_cmd = app.add_subcommand("schema", "Print the inferred schema of a CSV file");
    schema_cmd->add_option("data", schema_path, "CSV file")->required();

    std::string init_path;
    std::size_t init_limit = 30;
    auto* init_cmd = app.add_subcommand("init", "List the initial insights of a CSV file");
    init_cmd->add_option("data", init_path, "CSV file")->required();
    init_cmd->add_option("--limit", init_limit, "How many insights to list")->capture_default_str();

    ServeFlags sv;
    auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP service");
    serve_cmd->add_option("--host", sv.host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--port", sv.port, "Port")->capture_default_str();
    serve_cmd->add_option("--max-upload-mb", sv.max_upload_mb, "Largest accepted upload")->capture_default_str();
    serve_cmd->add_option("--long-poll", sv.long_poll, "Longest event wait in seconds")->capture_default_str();
    serve_cmd->add_option("--scratch-dir", sv.scratch_dir, "Directory receiving uploaded CSVs");
    serve_cmd->add_option("--preload", sv.preload, "CSV files to load at startup");
    RemoteFlags serve_remote;
    serve_remote.attach(*serve_cmd);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return kExitUsage;
    }

    try
    {
        if (*explore_cmd)
            return explore(ex, remote);
        if (*schema_cmd)
            return schema(schema_path);
        if (*init_cmd)
            return list_initial(init_path, init_limit);
        if (*serve_cmd)
            return serve(sv, serve_remote);
    }
    catch (const CLI::ValidationError& e)
    {
        std::cerr << e.what() << "\n" << app.help();
        return kExitUsage;
    }
    catch (const FileError& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFile;
    }
    catch (const dex::LoadError& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFile;
    }
    catch (const dex::ValidationError& e)
    {
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return kExitUsage;
    }
    catch (const nlohmann::json::exception& e)
    {
        std::cerr << "error: malformed JSON input: " << e.what() << "\n";
        return kExitFile;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailed;
    }
    return kExitUsage;
}
