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
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "weakkv/status.hpp"
#include "weakkv/types.hpp"

namespace weakkv {

// Page-granular block device. Thread-safe for concurrent reads/writes on
// distinct pages; writes to the same page must be externally serialized.
// sync() establishes an ordering barrier: no write issued after a sync may
// survive a crash unless every write issued before it survives.
class BlockDevice {
 public:
  virtual ~BlockDevice() = default;

  virtual Status read_page(PageId p, Page* out) = 0;
  virtual Status write_page(PageId p, const Page& data) = 0;
  virtual Status sync() = 0;
  virtual uint32_t page_capacity() const = 0;
};

// Real-file backend. Pages map to byte offsets p * kPageSize; reads beyond
// the current file size return zero pages. sync() issues fdatasync.
class FileDevice final : public BlockDevice {
 public:
  static Result<std::unique_ptr<FileDevice>> open(const std::string& path,
                                                  uint32_t page_capacity);
  ~FileDevice() override;

  FileDevice(const FileDevice&) = delete;
  FileDevice& operator=(const FileDevice&) = delete;

  Status read_page(PageId p, Page* out) override;
  Status write_page(PageId p, const Page& data) override;
  Status sync() override;
  uint32_t page_capacity() const override { return capacity_; }

 private:
  FileDevice(int fd, uint32_t capacity) : fd_(fd), capacity_(capacity) {}
  int fd_;
  uint32_t capacity_;
};

// Chooses which pending writes survive a simulated crash.
struct SubsetChoice {
  enum class Mode { kNone, kAll, kSeeded, kExplicit };
  Mode mode = Mode::kNone;
  uint64_t seed = 0;
  std::vector<bool> mask;  // kExplicit: one bit per pending entry, issue order

  static SubsetChoice none() { return {}; }
  static SubsetChoice all() { return {Mode::kAll, 0, {}}; }
  static SubsetChoice seeded(uint64_t s) { return {Mode::kSeeded, s, {}}; }
  static SubsetChoice explicit_mask(std::vector<bool> m) {
    return {Mode::kExplicit, 0, std::move(m)};
  }
};

// Device state frozen at a crash point: everything synced so far plus the
// ordered writes of the open epoch.
struct CrashImage {
  std::unordered_map<uint32_t, std::string> durable;
  std::vector<std::pair<uint32_t, std::string>> pending;

  // Materializes durable ∪ chosen subset of pending (last write per page
  // within the subset wins).
  std::unordered_map<uint32_t, std::string> apply(const SubsetChoice& choice) const;
  // Number of distinct surviving outcomes is 2^pending_count before
  // per-page last-write-wins collapsing.
  std::size_t pending_count() const { return pending.size(); }
};

// One storage operation, for exhaustive crash-point enumeration.
struct DeviceOp {
  bool is_sync = false;
  uint32_t page = 0;
  std::string bytes;  // empty for syncs
};

// Reconstructs the crash image at a prefix of an operation log: everything
// up to the last sync within the prefix is durable, the rest is pending.
CrashImage image_from_log(const std::vector<DeviceOp>& log, std::size_t prefix_len);

// In-memory backend modeling write reordering across sync barriers. A crash
// keeps all synced content plus an arbitrary subset of the writes issued
// since the last sync; a page is never torn between two writes.
class CrashSimDevice final : public BlockDevice {
 public:
  explicit CrashSimDevice(uint32_t page_capacity) : capacity_(page_capacity) {}

  // Builds a device whose durable content is image.apply(choice), as if the
  // machine rebooted at the captured point.
  static std::unique_ptr<CrashSimDevice> from_image(const CrashImage& image,
                                                    const SubsetChoice& choice,
                                                    uint32_t page_capacity);

  Status read_page(PageId p, Page* out) override;
  Status write_page(PageId p, const Page& data) override;
  Status sync() override;
  uint32_t page_capacity() const override { return capacity_; }

  // Drops unsynced writes except the chosen subset; the live view becomes
  // the post-crash content.
  void crash(const SubsetChoice& choice);

  // Captures a CrashImage the moment the global operation counter (writes
  // and syncs both count) reaches `at_op`. Only one capture may be armed.
  void arm_capture(uint64_t at_op);
  std::optional<CrashImage> take_captured();
  CrashImage snapshot_image() const;
  uint64_t op_count() const;

  // Records every write/sync for offline crash-point enumeration.
  void enable_op_log();
  std::vector<DeviceOp> take_op_log();

  // Fault injection: the next `n` sync (resp. write) calls fail with
  // kIOError and have no effect.
  void inject_sync_failures(int n);
  void inject_write_failures(int n);

 private:
  CrashImage image_locked() const;

  mutable std::mutex mu_;
  uint32_t capacity_;
  std::unordered_map<uint32_t, std::string> durable_;
  std::vector<std::pair<uint32_t, std::string>> pending_;
  uint64_t op_count_ = 0;
  uint64_t capture_at_ = 0;
  bool capture_armed_ = false;
  std::optional<CrashImage> captured_;
  bool op_log_enabled_ = false;
  std::vector<DeviceOp> op_log_;
  int sync_failures_ = 0;
  int write_failures_ = 0;
};

}  // namespace weakkv
