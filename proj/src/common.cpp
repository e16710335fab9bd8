#include "ethseq/common.hpp"

#include <algorithm>
#include <cctype>

namespace ethseq {

std::string to_string(u128 v) {
    if (v == 0) return "0";
    char buf[40];
    int n = 0;
    while (v > 0) {
        buf[n++] = static_cast<char>('0' + static_cast<int>(v % 10));
        v /= 10;
    }
    std::string out(buf, buf + n);
    std::reverse(out.begin(), out.end());
    return out;
}

std::optional<u128> parse_u128(std::string_view s) {
    if (s.empty()) return std::nullopt;
    constexpr u128 kMax = ~static_cast<u128>(0);
    u128 v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return std::nullopt;
        unsigned d = static_cast<unsigned>(c - '0');
        if (v > (kMax - d) / 10) return std::nullopt;  // overflow
        v = v * 10 + d;
    }
    return v;
}

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

template <std::size_t N>
std::string bytes_to_hex(const std::array<std::uint8_t, N>& bytes) {
    std::string out;
    out.reserve(2 + 2 * N);
    out += "0x";
    for (std::uint8_t b : bytes) {
        out += kHexDigits[b >> 4];
        out += kHexDigits[b & 0xf];
    }
    return out;
}

int hex_val(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

template <std::size_t N>
std::optional<std::array<std::uint8_t, N>> hex_to_bytes(std::string_view s) {
    if (s.size() >= 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) s.remove_prefix(2);
    if (s.size() != 2 * N) return std::nullopt;
    std::array<std::uint8_t, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        int hi = hex_val(s[2 * i]);
        int lo = hex_val(s[2 * i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

}  // namespace

std::string to_hex(const Address& a) { return bytes_to_hex(a); }
std::string to_hex(const Hash32& h) { return bytes_to_hex(h); }

std::optional<Address> parse_address(std::string_view s) { return hex_to_bytes<20>(s); }
std::optional<Hash32> parse_hash32(std::string_view s) { return hex_to_bytes<32>(s); }

std::size_t AddressHash::operator()(const Address& a) const noexcept {
    return static_cast<std::size_t>(fnv1a64(a.data(), a.size()));
}
std::size_t Hash32Hash::operator()(const Hash32& h) const noexcept {
    return static_cast<std::size_t>(fnv1a64(h.data(), h.size()));
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
    return fnv1a64(s.data(), s.size(), seed);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = fnv1a64(&root, sizeof root);
    h = fnv1a64(tag, h);
    h = fnv1a64(&a, sizeof a, h);
    h = fnv1a64(&b, sizeof b, h);
    h = fnv1a64(&c, sizeof c, h);
    // splitmix finalizer so nearby inputs give unrelated seeds
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return h;
}

std::string lower_copy(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace ethseq
