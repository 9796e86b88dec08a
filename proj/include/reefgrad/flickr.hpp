#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "reefgrad/errors.hpp"

namespace reefgrad {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Injectable HTTP requester. Implementations must be callable from up to
/// `FetchOptions::concurrency` threads at once.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse get(const std::string& url) = 0;
};

struct FetchOptions {
    std::size_t per_page = 100;
    std::size_t max_retries = 3;  // applied to HTTP 429 and transport failures
    std::chrono::milliseconds backoff_base{1000};
    std::size_t concurrency = 4;
};

struct FetchReport {
    std::size_t fetched = 0;
    std::size_t skipped = 0;  // already present at the destination
    std::size_t failed = 0;
    std::vector<std::string> failures;
};

/// application/x-www-form-urlencoded encoding ('+' for spaces).
std::string url_encode_query(const std::string& text);

std::string build_search_url(const std::string& api_key, const std::string& query,
                             std::size_t per_page, std::size_t page);

struct PhotoRecord {
    std::string id;
    std::string server;
    std::string secret;
};

std::string photo_source_url(const PhotoRecord& photo);

/// Pages flickr.photos.search until max_count photos are collected, then
/// downloads each photo's static URL into `destination` with at most
/// `concurrency` parallel requests. HTTP 429 triggers exponential backoff
/// (base * 2^attempt, max_retries attempts). Download failures are recorded
/// per item and the operation continues; an invalid API key raises AuthError.
FetchReport flickr_fetch(const std::string& api_key, const std::string& query,
                         std::size_t max_count, const std::filesystem::path& destination,
                         HttpTransport& transport, const FetchOptions& options = {});

} // namespace reefgrad
