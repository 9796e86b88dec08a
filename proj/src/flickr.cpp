#include "reefgrad/flickr.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace reefgrad {

namespace fs = std::filesystem;
using nlohmann::json;

std::string url_encode_query(const std::string& text) {
    static const char hex[] = "0123456789ABCDEF";
    std::string out;
    out.reserve(text.size());
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
            c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(ch);
        } else if (c == ' ') {
            out.push_back('+');
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xf]);
        }
    }
    return out;
}

std::string build_search_url(const std::string& api_key, const std::string& query,
                             std::size_t per_page, std::size_t page) {
    return "https://api.flickr.com/services/rest/?method=flickr.photos.search"
           "&api_key=" +
           url_encode_query(api_key) + "&text=" + url_encode_query(query) +
           "&format=json&nojsoncallback=1&per_page=" + std::to_string(per_page) +
           "&page=" + std::to_string(page);
}

std::string photo_source_url(const PhotoRecord& photo) {
    return "https://live.staticflickr.com/" + photo.server + "/" + photo.id + "_" + photo.secret +
           ".jpg";
}

namespace {

/// GET with retry on 429 and transport exceptions. Returns the final response;
/// rethrows the last transport error once retries are exhausted.
HttpResponse get_with_backoff(HttpTransport& transport, const std::string& url,
                              const FetchOptions& options) {
    for (std::size_t attempt = 0;; ++attempt) {
        try {
            HttpResponse resp = transport.get(url);
            if (resp.status != 429 || attempt >= options.max_retries) {
                return resp;
            }
        } catch (const std::exception&) {
            if (attempt >= options.max_retries) {
                throw;
            }
        }
        std::this_thread::sleep_for(options.backoff_base * (1u << attempt));
    }
}

std::vector<PhotoRecord> search_photos(const std::string& api_key, const std::string& query,
                                       std::size_t max_count, HttpTransport& transport,
                                       const FetchOptions& options) {
    std::vector<PhotoRecord> photos;
    std::size_t page = 1;
    std::size_t total_pages = 1;
    while (photos.size() < max_count && page <= total_pages) {
        const auto url = build_search_url(api_key, query, options.per_page, page);
        HttpResponse resp;
        try {
            resp = get_with_backoff(transport, url, options);
        } catch (const std::exception& e) {
            throw IoError(std::string("flickr search request failed: ") + e.what());
        }
        if (resp.status != 200) {
            throw IoError("flickr search returned HTTP " + std::to_string(resp.status));
        }
        json body;
        try {
            body = json::parse(resp.body);
        } catch (const json::exception& e) {
            throw FormatError(std::string("flickr search response is not valid JSON: ") +
                              e.what());
        }
        if (body.value("stat", "") != "ok") {
            const int code = body.value("code", 0);
            const std::string message = body.value("message", "unknown error");
            if (code == 100) {
                throw AuthError("flickr rejected the API key: " + message);
            }
            throw IoError("flickr API error " + std::to_string(code) + ": " + message);
        }
        const auto& photos_node = body.at("photos");
        total_pages = photos_node.value("pages", std::size_t{1});
        for (const auto& p : photos_node.at("photo")) {
            if (photos.size() >= max_count) break;
            photos.push_back({p.value("id", ""), p.value("server", ""), p.value("secret", "")});
        }
        ++page;
    }
    return photos;
}

} // namespace

FetchReport flickr_fetch(const std::string& api_key, const std::string& query,
                         std::size_t max_count, const fs::path& destination,
                         HttpTransport& transport, const FetchOptions& options) {
    if (api_key.empty()) {
        throw AuthError("flickr API key is empty");
    }
    std::error_code ec;
    fs::create_directories(destination, ec);
    if (ec || !fs::is_directory(destination)) {
        throw IoError("cannot create destination directory '" + destination.string() + "'");
    }

    const auto photos = search_photos(api_key, query, max_count, transport, options);

    FetchReport report;
    std::mutex report_mutex;
    std::atomic<std::size_t> next{0};

    const auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= photos.size()) return;
            const auto& photo = photos[i];
            const fs::path target = destination / (photo.id + ".jpg");
            if (fs::exists(target)) {
                std::lock_guard lock(report_mutex);
                ++report.skipped;
                continue;
            }
            const auto url = photo_source_url(photo);
            try {
                const HttpResponse resp = get_with_backoff(transport, url, options);
                if (resp.status != 200) {
                    std::lock_guard lock(report_mutex);
                    ++report.failed;
                    report.failures.push_back(photo.id + ": HTTP " +
                                              std::to_string(resp.status));
                    continue;
                }
                std::ofstream out(target, std::ios::binary);
                if (!out) {
                    throw IoError("cannot open '" + target.string() + "' for writing");
                }
                out.write(resp.body.data(), static_cast<std::streamsize>(resp.body.size()));
                if (!out) {
                    throw IoError("failed writing '" + target.string() + "'");
                }
                std::lock_guard lock(report_mutex);
                ++report.fetched;
            } catch (const IoError&) {
                throw;  // destination problems abort the whole fetch
            } catch (const std::exception& e) {
                std::lock_guard lock(report_mutex);
                ++report.failed;
                report.failures.push_back(photo.id + ": " + e.what());
            }
        }
    };

    const std::size_t n_workers =
        std::max<std::size_t>(1, std::min(options.concurrency, photos.size()));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        std::exception_ptr failure;
        std::mutex failure_mutex;
        for (std::size_t i = 0; i < n_workers; ++i) {
            threads.emplace_back([&]() {
                try {
                    worker();
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        if (failure) std::rethrow_exception(failure);
    }
    return report;
}

} // namespace reefgrad
