// SPDX-License-Identifier: Apache-2.0
#include <dex/server.hpp>

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace dex {

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string code, const std::string& message)
{
    send_json(res, status, {{"code", std::move(code)}, {"message", message}});
}

json insights_json(const std::vector<Insight>& insights)
{
    auto out = json::array();
    for (const auto& i: insights)
        out.push_back(to_json(i));
    return out;
}

struct SessionRecord
{
    std::string id;
    std::string dataset_id;
    std::string question;
    SessionConfig config;

    std::mutex mutex;
    std::condition_variable changed;
    SessionStatus status = SessionStatus::Running;
    std::string failure;
    std::vector<json> events;
    std::string report;
    std::atomic<bool> cancel {false};
    std::thread worker;

    void push(json event)
    {
        {
            std::lock_guard lock(mutex);
            event["index"] = events.size();
            events.push_back(std::move(event));
        }
        changed.notify_all();
    }

    /// Status, report and terminal event become visible together.
    void finish(SessionStatus final_status, std::string report_text, std::string why, json event)
    {
        {
            std::lock_guard lock(mutex);
            status = final_status;
            report = std::move(report_text);
            failure = std::move(why);
            event["index"] = events.size();
            events.push_back(std::move(event));
        }
        changed.notify_all();
    }
};

} // namespace

struct Server::Impl
{
    ServerOptions options;
    httplib::Server http;

    std::mutex mutex;
    std::map<std::string, std::shared_ptr<const Dataset>> datasets;
    std::map<std::string, std::shared_ptr<SessionRecord>> sessions;
    std::size_t next_session = 1;

    explicit Impl(ServerOptions o): options(std::move(o)) { routes(); }

    ~Impl()
    {
        std::vector<std::shared_ptr<SessionRecord>> all;
        {
            std::lock_guard lock(mutex);
            for (auto& [_, s]: sessions)
                all.push_back(s);
        }
        for (auto& s: all)
            s->cancel = true;
        http.stop();
        for (auto& s: all)
            if (s->worker.joinable())
                s->worker.join();
    }

    std::shared_ptr<const Dataset> dataset(const std::string& id)
    {
        std::lock_guard lock(mutex);
        auto it = datasets.find(id);
        return it == datasets.end() ? nullptr : it->second;
    }

    std::shared_ptr<SessionRecord> session(const std::string& id)
    {
        std::lock_guard lock(mutex);
        auto it = sessions.find(id);
        return it == sessions.end() ? nullptr : it->second;
    }

    std::string add(std::shared_ptr<const Dataset> ds)
    {
        std::lock_guard lock(mutex);
        auto id = ds->id();
        datasets.emplace(id, std::move(ds));
        return id;
    }

    void spill(const std::string& id, const std::string& text)
    {
        if (options.scratch_dir.empty())
            return;
        std::error_code ec;
        std::filesystem::create_directories(options.scratch_dir, ec);
        std::ofstream(std::filesystem::path(options.scratch_dir) / (id + ".csv"), std::ios::binary) << text;
    }

    void routes()
    {
        http.set_payload_max_length(options.max_upload_bytes);
        http.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        http.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
        http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try
            {
                std::rethrow_exception(ep);
            }
            catch (const std::exception& e)
            {
                send_error(res, 500, "internal", e.what());
            }
            catch (...)
            {
                send_error(res, 500, "internal", "unknown error");
            }
        });
        http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty())
                send_error(res, res.status, res.status == 404 ? "not_found" : "http_error",
                           httplib::status_message(res.status));
        });

        http.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"ok", true}}); });

        http.Post("/datasets", [this](const httplib::Request& req, httplib::Response& res) { upload(req, res); });

        http.Get(R"(/datasets/([^/]+)/schema)", [this](const httplib::Request& req, httplib::Response& res) {
            auto ds = dataset(req.matches[1]);
            if (!ds)
                return send_error(res, 404, "unknown_dataset", "no dataset '" + std::string(req.matches[1]) + "'");
            send_json(res, 200, schema_json(*ds));
        });

        http.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) { create(req, res); });

        http.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = session(req.matches[1]);
            if (!s)
                return send_error(res, 404, "unknown_session", "no session '" + std::string(req.matches[1]) + "'");
            std::lock_guard lock(s->mutex);
            send_json(res, 200,
                      {{"session_id", s->id},
                       {"dataset_id", s->dataset_id},
                       {"question", s->question},
                       {"status", status_name(s->status)},
                       {"events", s->events.size()}});
        });

        http.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
            events(req, res);
        });

        http.Get(R"(/sessions/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = session(req.matches[1]);
            if (!s)
                return send_error(res, 404, "unknown_session", "no session '" + std::string(req.matches[1]) + "'");
            std::lock_guard lock(s->mutex);
            if (s->status == SessionStatus::Running)
                return send_error(res, 409, "running", "session is still running");
            if (s->status == SessionStatus::Failed)
                return send_error(res, 500, "session_failed", s->failure);
            res.status = 200;
            res.set_content(s->report, "application/json");
        });

        http.Post(R"(/sessions/([^/]+)/cancel)", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = session(req.matches[1]);
            if (!s)
                return send_error(res, 404, "unknown_session", "no session '" + std::string(req.matches[1]) + "'");
            s->cancel = true;
            std::lock_guard lock(s->mutex);
            send_json(res, 202, {{"session_id", s->id}, {"status", status_name(s->status)}});
        });
    }

    void upload(const httplib::Request& req, httplib::Response& res)
    {
        std::string text;
        if (req.is_multipart_form_data())
        {
            if (!req.has_file("file"))
                return send_error(res, 400, "missing_file", "multipart upload needs a 'file' field");
            text = req.get_file_value("file").content;
        }
        else
            text = req.body;

        LoadOptions load = options.load;
        if (req.has_param("delimiter") && req.get_param_value("delimiter").size() == 1)
            load.delimiter = req.get_param_value("delimiter")[0];
        try
        {
            auto ds = std::make_shared<const Dataset>(load_csv(text, load));
            const auto id = add(ds);
            spill(id, text);
            send_json(res, 201, {{"dataset_id", id}, {"schema", schema_json(*ds)}});
        }
        catch (const LoadError& e)
        {
            send_json(res, 400, {{"code", "load_error"}, {"message", e.what()}, {"line", e.line()}});
        }
    }

    void create(const httplib::Request& req, httplib::Response& res)
    {
        const auto body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object())
            return send_error(res, 400, "bad_json", "request body must be a JSON object");
        if (!body.contains("dataset_id") || !body["dataset_id"].is_string())
            return send_error(res, 400, "validation", "dataset_id is required");
        if (!body.contains("question") || !body["question"].is_string())
            return send_error(res, 400, "validation", "question is required");
        auto ds = dataset(body["dataset_id"].get<std::string>());
        if (!ds)
            return send_error(res, 404, "unknown_dataset",
                              "no dataset '" + body["dataset_id"].get<std::string>() + "'");

        SessionConfig config;
        try
        {
            config = apply_overrides(options.defaults, body.value("config", json::object()));
            if (config.policy.kind == PolicySpec::Kind::Remote && config.policy.url.empty())
            {
                config.policy.url = options.remote_policy.url;
                config.policy.model = options.remote_policy.model;
                config.policy.key_env = options.remote_policy.key_env;
                config.policy.timeout_seconds = options.remote_policy.timeout_seconds;
            }
            config.validate();
        }
        catch (const ValidationError& e)
        {
            return send_error(res, 400, "validation", e.what());
        }

        auto record = std::make_shared<SessionRecord>();
        record->dataset_id = ds->id();
        record->question = body["question"].get<std::string>();
        record->config = config;
        {
            std::lock_guard lock(mutex);
            record->id = "s-" + std::to_string(next_session++);
            sessions.emplace(record->id, record);
        }
        record->worker = std::thread([this, record, ds] { run(*record, *ds); });
        send_json(res, 202, {{"session_id", record->id}});
    }

    void run(SessionRecord& s, const Dataset& ds)
    {
        try
        {
            auto policy = make_policy(s.config.policy);
            std::unique_ptr<EmbeddingProvider> embed;
            if (options.embeddings)
                embed = std::make_unique<RemoteEmbedding>(*options.embeddings);
            else
                embed = std::make_unique<LocalEmbedding>();

            SessionHooks hooks;
            hooks.on_init = [&](const ActionResult& r) {
                s.push({{"kind", "init"}, {"action", "init"}, {"picked", nullptr}, {"outputs", insights_json(r.outputs)},
                        {"note", r.note}});
            };
            hooks.on_step = [&](const ExplorationStep& step) {
                s.push({{"kind", "step"},
                        {"step", step.index},
                        {"action", action_name(step.action)},
                        {"picked", step.picked.empty() ? json(nullptr) : json(step.picked)},
                        {"outputs", insights_json(step.result.outputs)},
                        {"fallback", step.fallback},
                        {"note", step.result.note}});
            };
            hooks.cancelled = [&] { return s.cancel.load(); };

            auto outcome = run_session(ds, s.question, s.config, *policy, *embed, hooks);
            s.finish(outcome.status, to_json(outcome.report).dump(2), {},
                     {{"kind", "terminal"},
                      {"status", status_name(outcome.status)},
                      {"reason", termination_name(outcome.sequence.terminated)}});
        }
        catch (const std::exception& e)
        {
            s.finish(SessionStatus::Failed, {}, e.what(), {{"kind", "terminal"}, {"status", "failed"}, {"reason", e.what()}});
        }
    }

    void events(const httplib::Request& req, httplib::Response& res)
    {
        auto s = session(req.matches[1]);
        if (!s)
            return send_error(res, 404, "unknown_session", "no session '" + std::string(req.matches[1]) + "'");
        std::size_t since = 0;
        int wait_seconds = options.long_poll_seconds;
        try
        {
            if (req.has_param("since"))
                since = std::stoul(req.get_param_value("since"));
            if (req.has_param("timeout"))
                wait_seconds = std::clamp(std::stoi(req.get_param_value("timeout")), 0, options.long_poll_seconds);
        }
        catch (const std::exception&)
        {
            return send_error(res, 400, "validation", "since and timeout must be non-negative integers");
        }

        std::unique_lock lock(s->mutex);
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(wait_seconds);
        s->changed.wait_until(lock, deadline, [&] {
            return s->events.size() > since || s->status != SessionStatus::Running;
        });

        auto batch = json::array();
        for (std::size_t i = since; i < s->events.size(); ++i)
            batch.push_back(s->events[i]);
        const bool terminal = !s->events.empty() && s->events.back()["kind"] == "terminal";
        send_json(res, 200,
                  {{"session_id", s->id},
                   {"status", status_name(s->status)},
                   {"events", std::move(batch)},
                   {"next", std::max(since, s->events.size())},
                   {"terminal", terminal}});
    }
};

Server::Server(ServerOptions options): impl_(std::make_unique<Impl>(std::move(options))) {}

Server::~Server() = default;

int Server::bind_any_port(const std::string& host)
{
    return impl_->http.bind_to_any_port(host);
}

bool Server::bind(const std::string& host, int port)
{
    return impl_->http.bind_to_port(host, port);
}

bool Server::listen_after_bind()
{
    return impl_->http.listen_after_bind();
}

void Server::stop()
{
    impl_->http.stop();
}

void Server::wait_until_ready()
{
    impl_->http.wait_until_ready();
}

std::string Server::add_dataset(std::shared_ptr<const Dataset> dataset)
{
    return impl_->add(std::move(dataset));
}

} // namespace dex
