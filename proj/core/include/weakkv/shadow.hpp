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

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "weakkv/device.hpp"
#include "weakkv/status.hpp"
#include "weakkv/types.hpp"

namespace weakkv {

struct ShadowConfig {
  // Maximum number of logical pages this file can map.
  uint32_t logical_capacity = 262144;
  // Pages reserved for the delta log; a full region triggers a full-image
  // rewrite on the next flush.
  uint32_t delta_region_pages = 1024;
};

// Shadow-paging layer: a mutable logical "current file" plus a crash-atomic
// on-disk snapshot (the "stable file") created by flush(). Writes are
// out-of-place: a physical page referenced by the stable table is never
// overwritten between two flushes, so recovery always reproduces the last
// successful flush bit-exactly.
//
// On-disk layout (FORMAT.md): pages 0-1 header slots (ping-pong), then two
// alternating full-image slots, then the delta region, then data pages.
class ShadowFile {
 public:
  // Formats a fresh device: writes an empty epoch-0 snapshot.
  static Result<std::unique_ptr<ShadowFile>> format(BlockDevice* dev,
                                                    const ShadowConfig& cfg);
  // Rebuilds the page table from the stable table (full image plus the
  // longest valid prefix of the delta log). A trailing delta with a bad
  // checksum or a sequence gap is treated as not yet durable.
  static Result<std::unique_ptr<ShadowFile>> recover(BlockDevice* dev);

  ShadowFile(const ShadowFile&) = delete;
  ShadowFile& operator=(const ShadowFile&) = delete;

  // Logical reads/writes against the current file. Unmapped pages read as
  // zeros. write() places data on a fresh physical page and redirects the
  // table entry; the stable table's page for `a` is left untouched.
  Status read(LogicalAddr a, Page* out);
  Status write(LogicalAddr a, const Page& data);

  // Crash-atomically snapshots the current file into the stable file.
  // Ordering: data pages are made durable before the delta/image that
  // references them, and the delta/image is durable before flush returns.
  // On failure the previous snapshot remains the recovery target and the
  // dirty set is retained, so a retry is safe.
  Result<SnapshotEpoch> flush();

  // Returns physical pages referenced by neither the current nor the stable
  // table to the free list; reports how many were reclaimed.
  uint32_t gc();

  SnapshotEpoch epoch() const;

  // Introspection.
  uint32_t logical_capacity() const { return cfg_.logical_capacity; }
  uint32_t mapped_pages() const;
  // Page-table memory accounting: one 4-byte entry per mapped logical page.
  uint64_t table_bytes() const;
  uint32_t free_pages() const;
  uint32_t data_start() const { return data_start_; }
  uint32_t high_water() const;
  uint32_t delta_records() const;
  // Current/stable mappings, for tests. Invalid PageId when unmapped.
  PageId current_phys(LogicalAddr a) const;
  bool stable_referenced(PageId p) const;

  // Checks page-table injectivity and current-table/free-list disjointness.
  Status check_invariants() const;

 private:
  ShadowFile(BlockDevice* dev, const ShadowConfig& cfg);

  Status load_stable(uint32_t image_slot, uint64_t* checksum_out);
  void replay_deltas();
  void finish_recovery();
  Result<PageId> alloc_phys_locked();
  void rebuild_free_locked();
  Status write_image_locked(SnapshotEpoch new_epoch);
  Status write_delta_locked(SnapshotEpoch new_epoch,
                            const std::vector<std::pair<uint32_t, uint32_t>>& pairs);

  BlockDevice* dev_;
  ShadowConfig cfg_;
  uint32_t image_pages_;
  uint32_t delta_start_;
  uint32_t data_start_;

  mutable std::mutex mu_;
  std::vector<uint32_t> table_;        // logical -> physical; grows to high mapped addr
  std::vector<bool> dirty_;            // logical addrs changed since last flush
  uint32_t dirty_count_ = 0;
  std::vector<bool> stable_ref_;       // physical pages referenced by the stable table
  std::vector<uint32_t> free_;         // recycled physical pages (LIFO)
  uint32_t phys_high_ = 0;             // next never-used physical page
  SnapshotEpoch epoch_ = 0;
  uint32_t image_slot_ = 0;            // which image slot the stable table uses
  SnapshotEpoch image_epoch_ = 0;      // epoch at which that image was written
  uint32_t delta_used_pages_ = 0;
  uint32_t delta_record_count_ = 0;
};

}  // namespace weakkv
