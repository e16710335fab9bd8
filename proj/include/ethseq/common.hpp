#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ethseq {

// 256-bit wei values do not occur in practice; 128 bits hold any realistic
// transfer amount. Values that overflow are rejected as malformed rows.
using u128 = unsigned __int128;

using Address = std::array<std::uint8_t, 20>;
using Hash32 = std::array<std::uint8_t, 32>;

// Input data violated a schema or referenced something missing. CLI maps
// this to exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss, divergence, or a numeric contract violation. Exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

std::string to_string(u128 v);
std::optional<u128> parse_u128(std::string_view s);

// "0x" + 40 lowercase hex chars. Parsing accepts mixed case and canonicalizes.
std::string to_hex(const Address& a);
std::string to_hex(const Hash32& h);
std::optional<Address> parse_address(std::string_view s);
std::optional<Hash32> parse_hash32(std::string_view s);

struct AddressHash {
    std::size_t operator()(const Address& a) const noexcept;
};
struct Hash32Hash {
    std::size_t operator()(const Hash32& h) const noexcept;
};

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Seed derivation used everywhere randomness is needed: one root seed,
// per-use streams named by tag + indices so results are independent of
// scheduling.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0);

std::string lower_copy(std::string_view s);
std::string_view trim(std::string_view s);

}  // namespace ethseq
