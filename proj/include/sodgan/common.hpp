#pragma once

// Shared plumbing: error taxonomy, stable 64-bit hashing, seed derivation,
// small string/filesystem helpers.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>

namespace sodgan {

namespace fs = std::filesystem;

enum class ErrKind {
  invalid_argument,
  empty_input,
  missing_class,
  filter_too_strict,
  corrupt_dataset,
  dependency,
  config,
  io,
};

inline const char* err_kind_name(ErrKind k) {
  switch (k) {
    case ErrKind::invalid_argument: return "invalid-argument";
    case ErrKind::empty_input: return "empty-input";
    case ErrKind::missing_class: return "missing-class";
    case ErrKind::filter_too_strict: return "filter-too-strict";
    case ErrKind::corrupt_dataset: return "corrupt-dataset";
    case ErrKind::dependency: return "dependency";
    case ErrKind::config: return "config";
    case ErrKind::io: return "io";
  }
  return "unknown";
}

// Process exit code per error family (CLI contract).
inline int err_exit_code(ErrKind k) {
  switch (k) {
    case ErrKind::invalid_argument:
    case ErrKind::empty_input:
    case ErrKind::missing_class:
    case ErrKind::config: return 2;
    case ErrKind::dependency: return 3;
    case ErrKind::filter_too_strict: return 4;
    case ErrKind::corrupt_dataset:
    case ErrKind::io: return 5;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrKind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrKind kind() const { return kind_; }
  int exit_code() const { return err_exit_code(kind_); }

 private:
  ErrKind kind_;
};

[[noreturn]] inline void fail(ErrKind k, const std::string& msg) { throw Error(k, msg); }

inline void require(bool ok, ErrKind k, const std::string& msg) {
  if (!ok) fail(k, msg);
}

// FNV-1a, stable across platforms; used for checksums and manifest integrity.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

// splitmix64 finalizer; good avalanche for seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a tag tuple.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(seed);
  for (auto t : tags) h = mix64(h ^ mix64(t));
  return h;
}

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrKind::io, "cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  require(out.good(), ErrKind::io, "write failed: " + path.string());
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrKind::io, "cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace sodgan
