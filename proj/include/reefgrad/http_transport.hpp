#pragma once

#include <memory>

#include "reefgrad/flickr.hpp"

namespace reefgrad {

/// Live HTTP(S) transport. HTTPS requires a build with OpenSSL; constructing
/// one without it raises IoError.
std::unique_ptr<HttpTransport> make_live_transport();

} // namespace reefgrad
