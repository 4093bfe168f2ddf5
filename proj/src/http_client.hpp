// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <dex/common.hpp>

#include <json.hpp>

#include <string>

namespace dex::detail {

class TransportError: public Error
{
public:
    using Error::Error;
};

/// POSTs JSON to an absolute http(s) URL and parses the JSON reply.
/// `key_env` names an environment variable holding a bearer token.
/// Throws TransportError on connection failure, non-2xx status or bad JSON.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body, const std::string& key_env,
                         int timeout_seconds);

} // namespace dex::detail
