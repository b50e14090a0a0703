#pragma once

#include "json.hpp"

#include <string>
#include <utility>
#include <vector>

namespace stevo::http {

struct Response {
    int status = 0;
    std::string body;
};

// Splits "http://host:port/path" into ("http://host:port", "/path").
std::pair<std::string, std::string> split_url(const std::string& url);

// Throws std::runtime_error on transport failure; HTTP error statuses are returned.
Response post_json(const std::string& url, const nlohmann::json& body,
                   const std::vector<std::pair<std::string, std::string>>& headers, int timeout_seconds);

}  // namespace stevo::http
