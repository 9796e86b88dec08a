#include "reefgrad/http_transport.hpp"

#ifdef REEFGRAD_HAS_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

namespace reefgrad {

namespace {

class LiveTransport : public HttpTransport {
public:
    HttpResponse get(const std::string& url) override {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) {
            throw IoError("malformed URL '" + url + "'");
        }
        const std::string scheme = url.substr(0, scheme_end);
        const auto host_start = scheme_end + 3;
        const auto path_start = url.find('/', host_start);
        const std::string host = url.substr(host_start, path_start == std::string::npos
                                                            ? std::string::npos
                                                            : path_start - host_start);
        const std::string path =
            path_start == std::string::npos ? "/" : url.substr(path_start);
#ifndef REEFGRAD_HAS_OPENSSL
        if (scheme == "https") {
            throw IoError("this build has no TLS support; cannot fetch " + url);
        }
#endif
        httplib::Client client((scheme + "://" + host).c_str());
        client.set_follow_location(true);
        client.set_connection_timeout(30);
        client.set_read_timeout(60);
        auto result = client.Get(path);
        if (!result) {
            throw IoError("request to " + host + " failed: " +
                          httplib::to_string(result.error()));
        }
        return {result->status, result->body};
    }
};

} // namespace

std::unique_ptr<HttpTransport> make_live_transport() {
    return std::make_unique<LiveTransport>();
}

} // namespace reefgrad
