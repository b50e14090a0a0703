#include "stevo/http.hpp"

#ifdef STEVO_WITH_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include <stdexcept>

namespace stevo::http {

std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw std::runtime_error("url has no scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

Response post_json(const std::string& url, const nlohmann::json& body,
                   const std::vector<std::pair<std::string, std::string>>& headers, int timeout_seconds) {
    const auto [origin, path] = split_url(url);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout_seconds, 0);
    client.set_read_timeout(timeout_seconds, 0);
    client.set_write_timeout(timeout_seconds, 0);

    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);

    auto res = client.Post(path, hdrs, body.dump(), "application/json");
    if (!res) throw std::runtime_error("POST " + url + " failed: " + httplib::to_string(res.error()));
    return Response{res->status, res->body};
}

}  // namespace stevo::http
