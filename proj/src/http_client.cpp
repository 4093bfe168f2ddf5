// SPDX-License-Identifier: Apache-2.0
#include "http_client.hpp"

#include <httplib.h>

#include <cstdlib>

namespace dex::detail {

nlohmann::json post_json(const std::string& url, const nlohmann::json& body, const std::string& key_env,
                         int timeout_seconds)
{
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw TransportError("not an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout_seconds, 0);
    client.set_read_timeout(timeout_seconds, 0);
    client.set_write_timeout(timeout_seconds, 0);

    httplib::Headers headers;
    if (!key_env.empty())
        if (const char* key = std::getenv(key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res)
        throw TransportError("request to " + origin + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw TransportError("request to " + origin + path + " returned HTTP " + std::to_string(res->status));
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded())
        throw TransportError("response from " + origin + path + " is not JSON");
    return parsed;
}

} // namespace dex::detail
