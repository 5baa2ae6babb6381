#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mgt {

using NodeId = std::uint32_t;

// Bad user input: malformed files, inconsistent shapes, invalid flags.
// The CLI maps this to exit code 2; everything else is an internal failure.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// Named sub-stream of a master seed ("mask", "pairs", "line", ...), so that
// each component is reproducible on its own.
Rng make_stream(std::uint64_t master_seed, std::string_view name);

std::uint64_t splitmix64(std::uint64_t x) noexcept;

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace mgt
