// SPDX-License-Identifier: Apache-2.0
#pragma once

// HTTP+JSON service: dataset upload, asynchronous sessions, long-poll step
// events and report retrieval.

#include <dex/agent.hpp>
#include <dex/dataset.hpp>

#include <memory>
#include <optional>
#include <string>

namespace dex {

struct ServerOptions
{
    std::size_t max_upload_bytes = 50u * 1024u * 1024u;
    /// Upper bound on how long GET /events waits for news.
    int long_poll_seconds = 10;
    SessionConfig defaults {};
    /// Endpoint used when a session asks for {"policy":{"kind":"remote"}}.
    PolicySpec remote_policy {};
    std::optional<RemoteEmbeddingOptions> embeddings;
    LoadOptions load {};
    /// When set, uploaded CSVs are also written here.
    std::string scratch_dir;
};

class Server
{
public:
    explicit Server(ServerOptions options = {});
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds to an ephemeral port and returns it (negative on failure).
    int bind_any_port(const std::string& host = "127.0.0.1");
    bool bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    bool listen_after_bind();
    void stop();
    /// Blocks until the listener is accepting connections.
    void wait_until_ready();

    /// Loads a dataset directly (used by tools and tests). Returns its id.
    std::string add_dataset(std::shared_ptr<const Dataset> dataset);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace dex
