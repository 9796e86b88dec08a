#pragma once

#include <stdexcept>
#include <string>

namespace reefgrad {

/// Base class for all reefgrad errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shapes do not agree for the requested operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Convolution/pooling geometry does not yield an integral positive output size,
/// or a network cannot be assembled for the declared input resolution.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Invalid argument value (out-of-range label, bad split fraction, unsupported depth, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Malformed serialized data (image bytes, weight files, manifests).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Filesystem or transport failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// API-level authentication failure (e.g. rejected Flickr key).
class AuthError : public Error {
public:
    using Error::Error;
};

/// Mismatch between a forward cache and the network it is replayed against.
class StateError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// A layer selector names no layer in the network.
class SelectorError : public Error {
public:
    using Error::Error;
};

/// A layer selector names a layer of the wrong kind (e.g. non-spatial for Grad-CAM).
class LayerTypeError : public Error {
public:
    using Error::Error;
};

} // namespace reefgrad
