/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace weakkv {

// All on-disk integers are little-endian; page p lives at byte offset
// p * kPageSize of the database file.
inline constexpr std::size_t kPageSize = 4096;

inline constexpr std::size_t kMaxKeyLen = 1024;
inline constexpr std::size_t kMaxValueLen = 65536;

// Keys are nonempty byte strings ordered lexicographically. Values are byte
// strings; the empty value is a tombstone.
using Key = std::string;
using Value = std::string;

inline bool is_tombstone(const Value& v) { return v.empty(); }

// Physical page number within the database file.
struct PageId {
  uint32_t index = kInvalid;
  static constexpr uint32_t kInvalid = 0xffffffffu;
  bool valid() const { return index != kInvalid; }
  friend bool operator==(PageId a, PageId b) { return a.index == b.index; }
  friend auto operator<=>(PageId a, PageId b) { return a.index <=> b.index; }
};

// Logical page number as seen by layers above the shadow.
struct LogicalAddr {
  uint32_t index = kInvalid;
  static constexpr uint32_t kInvalid = 0xffffffffu;
  bool valid() const { return index != kInvalid; }
  friend bool operator==(LogicalAddr a, LogicalAddr b) { return a.index == b.index; }
  friend auto operator<=>(LogicalAddr a, LogicalAddr b) { return a.index <=> b.index; }
};

// Counter incremented by every successful flush; identifies a snapshot.
using SnapshotEpoch = uint64_t;

// A fixed-size page image.
struct Page {
  Page() : bytes(kPageSize, '\0') {}
  explicit Page(std::string b) : bytes(std::move(b)) {}
  std::string bytes;
  bool zero() const {
    for (char c : bytes)
      if (c != '\0') return false;
    return true;
  }
};

// Little-endian codec helpers.
inline void put_u16(char* p, uint16_t v) { std::memcpy(p, &v, 2); }
inline void put_u32(char* p, uint32_t v) { std::memcpy(p, &v, 4); }
inline void put_u64(char* p, uint64_t v) { std::memcpy(p, &v, 8); }
inline uint16_t get_u16(const char* p) {
  uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}
inline uint32_t get_u32(const char* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}
inline uint64_t get_u64(const char* p) {
  uint64_t v;
  std::memcpy(&v, p, 8);
  return v;
}

// FNV-1a, used for delta-record checksums and structural hashes.
inline uint64_t fnv1a(const void* data, std::size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace weakkv
