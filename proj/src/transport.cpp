// The only translation unit that includes cpp-httplib, to keep builds fast.
#include "kcomp/transport.hpp"

#include <httplib.h>

namespace kcomp {

namespace {

class HttplibTransport final : public Transport {
public:
    HttpResponse post_json(const std::string& base_url, const std::string& path,
                           const std::string& body, int timeout_ms,
                           const std::string& auth_token) override {
        httplib::Client client(base_url);
        client.set_connection_timeout(0, timeout_ms * 1000);
        client.set_read_timeout(0, timeout_ms * 1000);
        client.set_write_timeout(0, timeout_ms * 1000);
        httplib::Headers headers;
        if (!auth_token.empty()) {
            headers.emplace("Authorization", "Bearer " + auth_token);
        }
        auto result = client.Post(path, headers, body, "application/json");
        if (!result) {
            return {0, httplib::to_string(result.error())};
        }
        return {result->status, result->body};
    }
};

}  // namespace

std::shared_ptr<Transport> make_httplib_transport() {
    return std::make_shared<HttplibTransport>();
}

}  // namespace kcomp
