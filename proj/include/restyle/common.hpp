#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace restyle {

// Whitespace tokenization. Input corpora are pre-tokenized, so this is the
// only split the toolkit ever does.
std::vector<std::string> split_ws(const std::string& line);

std::string join(const std::vector<std::string>& toks, const std::string& sep = " ");

// FNV-1a over raw bytes; used for config hashes and parameter checksums.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 1469598103934665603ULL);

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

inline void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

void log_warn(const std::string& msg);
void log_info(const std::string& msg);

}  // namespace restyle
