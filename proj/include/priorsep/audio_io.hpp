#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>

#include "priorsep/core.hpp"

// Canonical audio container: WAV, mono, 16-bit signed PCM, 16 kHz. Anything
// else is rejected with a distinct error rather than silently converted, so
// metric numbers stay comparable across runs.

namespace priorsep::io {

struct AudioError : Error {
    using Error::Error;
};
struct AudioHeaderError : AudioError {
    using AudioError::AudioError;
};
struct AudioChannelError : AudioError {
    using AudioError::AudioError;
};
struct AudioRateError : AudioError {
    using AudioError::AudioError;
};
struct AudioDepthError : AudioError {
    using AudioError::AudioError;
};

inline constexpr std::uint32_t kRequiredRate = 16000;

namespace detail {

inline std::uint32_t get_u32(const unsigned char *p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}

inline std::uint16_t get_u16(const unsigned char *p) {
    return std::uint16_t(p[0] | (p[1] << 8));
}

inline void put_u32(std::string &s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xFF));
}

inline void put_u16(std::string &s, std::uint16_t v) {
    s.push_back(char(v & 0xFF));
    s.push_back(char((v >> 8) & 0xFF));
}

}  // namespace detail

/// Writes bytes to `path` via a temporary file renamed on success, so a
/// failed write never leaves a partial output behind.
inline void atomic_write_file(const std::string &path, const std::string &bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp + " for writing");
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error("write failed for " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error("cannot move " + tmp + " into place: " + ec.message());
    }
}

inline Waveform read_audio(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AudioError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto *p = reinterpret_cast<const unsigned char *>(buf.data());

    if (buf.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw AudioHeaderError(path + ": not a RIFF/WAVE file");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t data_off = 0, data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const char *id = buf.data() + pos;
        const std::uint32_t len = detail::get_u32(p + pos + 4);
        const std::size_t body = pos + 8;
        if (body + len > buf.size())
            throw AudioHeaderError(path + ": chunk '" + std::string(id, 4) +
                                   "' overruns the file");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw AudioHeaderError(path + ": fmt chunk too short");
            format = detail::get_u16(p + body);
            channels = detail::get_u16(p + body + 2);
            rate = detail::get_u32(p + body + 4);
            bits = detail::get_u16(p + body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = body;
            data_len = len;
        }
        pos = body + len + (len & 1);  // chunks are word-aligned
    }

    if (!have_fmt || data_off == 0)
        throw AudioHeaderError(path + ": missing fmt or data chunk");
    if (channels != 1)
        throw AudioChannelError(path + ": mono required, file has " +
                                std::to_string(channels) + " channels");
    if (rate != kRequiredRate)
        throw AudioRateError(path + ": sample rate " + std::to_string(rate) +
                             " Hz, expected " + std::to_string(kRequiredRate));
    if (format != 1 || bits != 16)
        throw AudioDepthError(path + ": 16-bit PCM required");
    if (data_len % 2 != 0) throw AudioHeaderError(path + ": odd PCM payload length");

    Waveform w(data_len / 2, double(kRequiredRate));
    for (std::size_t i = 0; i < w.size(); ++i) {
        const std::uint16_t u = detail::get_u16(p + data_off + 2 * i);
        w.samples[i] = double(std::int16_t(u)) / 32768.0;
    }
    return w;
}

inline void write_audio(const Waveform &w, const std::string &path) {
    const std::uint32_t n = std::uint32_t(w.size());
    std::string buf;
    buf.reserve(44 + 2 * n);
    buf += "RIFF";
    detail::put_u32(buf, 36 + 2 * n);
    buf += "WAVEfmt ";
    detail::put_u32(buf, 16);
    detail::put_u16(buf, 1);  // PCM
    detail::put_u16(buf, 1);  // mono
    detail::put_u32(buf, kRequiredRate);
    detail::put_u32(buf, kRequiredRate * 2);  // byte rate
    detail::put_u16(buf, 2);                  // block align
    detail::put_u16(buf, 16);                 // bits
    buf += "data";
    detail::put_u32(buf, 2 * n);
    constexpr double kMax = 1.0 - 1.0 / 32768.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double x = std::clamp(w.samples[i], -1.0, kMax);
        const auto v = std::int16_t(std::lrint(x * 32768.0));
        detail::put_u16(buf, std::uint16_t(v));
    }
    atomic_write_file(path, buf);
}

}  // namespace priorsep::io
