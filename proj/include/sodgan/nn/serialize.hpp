#pragma once

// Checkpoint blobs: named float32 tensors behind a small fixed header.
// Loading requires the store layout (names/shapes) to match the net that was
// constructed from the sidecar config, and round-trips bit-exactly.

#include <cstdint>
#include <fstream>

#include "sodgan/common.hpp"
#include "sodgan/nn/store.hpp"

namespace sodgan::nn {

inline constexpr std::uint32_t kBlobMagic = 0x47444f53;  // "SODG"
inline constexpr std::uint32_t kBlobVersion = 1;

namespace detail {

template <class V>
void put(std::ofstream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V get(std::ifstream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  return v;
}

}  // namespace detail

inline void save_store(const fs::path& path, const ParamStore<float>& st) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrKind::io, "cannot write checkpoint: " + path.string());
  detail::put(out, kBlobMagic);
  detail::put(out, kBlobVersion);
  detail::put(out, static_cast<std::uint64_t>(st.slots.size()));
  for (const auto& s : st.slots) {
    detail::put(out, static_cast<std::uint32_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    detail::put(out, static_cast<std::uint32_t>(s.shape.size()));
    for (int d : s.shape) detail::put(out, static_cast<std::uint32_t>(d));
    detail::put(out, static_cast<std::uint64_t>(s.count));
    out.write(reinterpret_cast<const char*>(st.w.data() + s.off),
              static_cast<std::streamsize>(s.count * sizeof(float)));
  }
  require(out.good(), ErrKind::io, "short write: " + path.string());
}

inline void load_store(const fs::path& path, ParamStore<float>& st) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrKind::dependency, "missing checkpoint: " + path.string());
  require(detail::get<std::uint32_t>(in) == kBlobMagic, ErrKind::corrupt_dataset,
          "bad checkpoint magic: " + path.string());
  require(detail::get<std::uint32_t>(in) == kBlobVersion, ErrKind::corrupt_dataset,
          "unsupported checkpoint version: " + path.string());
  const auto nslots = detail::get<std::uint64_t>(in);
  require(nslots == st.slots.size(), ErrKind::corrupt_dataset,
          "checkpoint slot count mismatch: " + path.string());
  for (const auto& s : st.slots) {
    const auto name_len = detail::get<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    require(name == s.name, ErrKind::corrupt_dataset,
            "checkpoint tensor name mismatch: expected " + s.name + " got " + name);
    const auto ndim = detail::get<std::uint32_t>(in);
    require(ndim == s.shape.size(), ErrKind::corrupt_dataset, "checkpoint rank mismatch: " + s.name);
    for (int d : s.shape) {
      require(detail::get<std::uint32_t>(in) == static_cast<std::uint32_t>(d),
              ErrKind::corrupt_dataset, "checkpoint shape mismatch: " + s.name);
    }
    const auto count = detail::get<std::uint64_t>(in);
    require(count == s.count, ErrKind::corrupt_dataset, "checkpoint size mismatch: " + s.name);
    in.read(reinterpret_cast<char*>(st.w.data() + s.off),
            static_cast<std::streamsize>(count * sizeof(float)));
  }
  require(in.good(), ErrKind::corrupt_dataset, "truncated checkpoint: " + path.string());
}

}  // namespace sodgan::nn
