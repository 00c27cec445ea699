#pragma once

#include <memory>
#include <string>

namespace kcomp {

// status == 0 means the request never produced an HTTP response (connect
// failure, timeout); body then carries the transport's error description.
struct HttpResponse {
    int status = 0;
    std::string body;
};

// Injection seam between backend clients and the network. Tests substitute
// a scripted transport so retry, backoff and error paths run hermetically.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post_json(const std::string& base_url, const std::string& path,
                                   const std::string& body, int timeout_ms,
                                   const std::string& auth_token) = 0;
};

// Real HTTP transport (plain http:// base URLs).
std::shared_ptr<Transport> make_httplib_transport();

}  // namespace kcomp
