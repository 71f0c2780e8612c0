// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fastsurf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Exception hierarchy. Every error thrown by the library derives from Error.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidParameterError : public Error {
public:
    using Error::Error;
};
class InvalidDepthError : public Error {
public:
    using Error::Error;
};
class EmptySceneError : public Error {
public:
    using Error::Error;
};
class DimensionError : public Error {
public:
    using Error::Error;
};
class OutOfBoundsError : public Error {
public:
    using Error::Error;
};
class ResourceError : public Error {
public:
    using Error::Error;
};
class NumericalError : public Error {
public:
    using Error::Error;
};
class ParseError : public Error {
public:
    using Error::Error;
};
class IoError : public Error {
public:
    using Error::Error;
};

namespace detail {

template <typename T>
T byteswap_if_big(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::little) {
        return value;
    } else {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        }
        std::memcpy(&value, bytes, sizeof(T));
        return value;
    }
}

} // namespace detail

/// Little-endian binary writer over an ostream.
class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream &out) : out_(out) {}

    template <typename T>
    void write(T value) {
        value = detail::byteswap_if_big(value);
        out_.write(reinterpret_cast<const char *>(&value), sizeof(T));
    }

    void write_bytes(const void *data, std::size_t n) { out_.write(static_cast<const char *>(data), static_cast<std::streamsize>(n)); }

    void write_tag(const char (&tag)[5]) { out_.write(tag, 4); }

    template <typename T>
    void write_array(const T *data, std::size_t n) {
        if constexpr (std::endian::native == std::endian::little) {
            write_bytes(data, n * sizeof(T));
        } else {
            for (std::size_t i = 0; i < n; ++i) write(data[i]);
        }
    }

    bool good() const { return out_.good(); }

private:
    std::ostream &out_;
};

/// Little-endian binary reader; throws ParseError on short reads.
class BinaryReader {
public:
    BinaryReader(std::istream &in, std::string source) : in_(in), source_(std::move(source)) {}

    template <typename T>
    T read() {
        T value{};
        in_.read(reinterpret_cast<char *>(&value), sizeof(T));
        if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
            throw ParseError(source_ + ": unexpected end of file");
        }
        return detail::byteswap_if_big(value);
    }

    void read_bytes(void *data, std::size_t n) {
        in_.read(static_cast<char *>(data), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            throw ParseError(source_ + ": unexpected end of file");
        }
    }

    template <typename T>
    void read_array(T *data, std::size_t n) {
        read_bytes(data, n * sizeof(T));
        if constexpr (std::endian::native != std::endian::little) {
            for (std::size_t i = 0; i < n; ++i) data[i] = detail::byteswap_if_big(data[i]);
        }
    }

    std::string read_tag() {
        char tag[4];
        read_bytes(tag, 4);
        return std::string(tag, 4);
    }

    const std::string &source() const { return source_; }

private:
    std::istream &in_;
    std::string source_;
};

/// Training allocates and frees multi-megabyte temporaries every iteration.
/// glibc returns them to the kernel by default, and refaulting the pages costs
/// about as much as the arithmetic. Call once at program start to keep them in
/// the heap. No effect on other C libraries.
inline void retain_large_allocations() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 << 20); // the largest value glibc accepts
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

} // namespace fastsurf
