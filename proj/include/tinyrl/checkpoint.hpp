#pragma once

// Flat binary checkpoint: little-endian header (magic "TRL1", version,
// vocab size, window, theta_dim as u32) followed by theta_dim f64 weights.
// Embed and hidden dims ride along after the required header fields so a
// checkpoint fully reconstructs PolicyDims.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "tinyrl/errors.hpp"
#include "tinyrl/policy.hpp"

namespace tinyrl {

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

inline void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

}  // namespace detail

constexpr std::uint32_t kCheckpointMagic = 0x314c5254;  // "TRL1"
constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const PolicyParams& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("save_checkpoint: cannot open " + path);
    detail::put_u32(os, kCheckpointMagic);
    detail::put_u32(os, kCheckpointVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(p.dims.vocab));
    detail::put_u32(os, static_cast<std::uint32_t>(p.dims.window));
    detail::put_u32(os, static_cast<std::uint32_t>(p.dims.theta_dim()));
    detail::put_u32(os, static_cast<std::uint32_t>(p.dims.embed));
    detail::put_u32(os, static_cast<std::uint32_t>(p.dims.hidden));
    os.write(reinterpret_cast<const char*>(p.w.data()),
             static_cast<std::streamsize>(p.w.size() * sizeof(double)));
    if (!os) throw DataError("save_checkpoint: write failed for " + path);
}

inline PolicyParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_checkpoint: cannot open " + path);
    if (detail::get_u32(is) != kCheckpointMagic) throw DataError("load_checkpoint: bad magic");
    if (detail::get_u32(is) != kCheckpointVersion) throw DataError("load_checkpoint: bad version");
    PolicyDims d;
    d.vocab = static_cast<int>(detail::get_u32(is));
    d.window = static_cast<int>(detail::get_u32(is));
    const auto theta = detail::get_u32(is);
    d.embed = static_cast<int>(detail::get_u32(is));
    d.hidden = static_cast<int>(detail::get_u32(is));
    if (static_cast<int>(theta) != d.theta_dim())
        throw DataError("load_checkpoint: theta_dim mismatch");
    PolicyParams p = PolicyParams::zeros(d);
    is.read(reinterpret_cast<char*>(p.w.data()),
            static_cast<std::streamsize>(p.w.size() * sizeof(double)));
    if (!is) throw DataError("load_checkpoint: truncated file " + path);
    return p;
}

}  // namespace tinyrl
