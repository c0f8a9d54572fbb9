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
#include "weakkv/shadow.hpp"

#include <algorithm>
#include <cstring>

namespace weakkv {

namespace {

constexpr uint64_t kMagic = 0x3157444853564b57ull;  // "WKVSHDW1"
constexpr uint32_t kVersion = 1;
constexpr uint32_t kHeaderSlots = 2;

// Header page layout.
constexpr std::size_t kHdrMagic = 0;
constexpr std::size_t kHdrVersion = 8;
constexpr std::size_t kHdrImageSlot = 12;
constexpr std::size_t kHdrEpoch = 16;
constexpr std::size_t kHdrCapacity = 24;
constexpr std::size_t kHdrDeltaPages = 28;
constexpr std::size_t kHdrImageChecksum = 32;
constexpr std::size_t kHdrChecksum = 40;
constexpr std::size_t kHdrBytes = 48;

// Delta record layout: seq u64, count u32, count * (logical u32, phys u32),
// checksum u64 over all preceding bytes. Records start on page boundaries.
constexpr std::size_t kDeltaFixedBytes = 8 + 4 + 8;

uint32_t image_pages_for(uint32_t capacity) {
  uint64_t bytes = uint64_t{capacity} * 4;
  return static_cast<uint32_t>((bytes + kPageSize - 1) / kPageSize);
}

uint32_t delta_pages_for(std::size_t pair_count) {
  std::size_t bytes = kDeltaFixedBytes + pair_count * 8;
  return static_cast<uint32_t>((bytes + kPageSize - 1) / kPageSize);
}

struct Header {
  uint32_t image_slot = 0;
  SnapshotEpoch epoch = 0;
  uint32_t capacity = 0;
  uint32_t delta_pages = 0;
  uint64_t image_checksum = 0;
};

void encode_header(const Header& h, Page* page) {
  page->bytes.assign(kPageSize, '\0');
  char* p = page->bytes.data();
  put_u64(p + kHdrMagic, kMagic);
  put_u32(p + kHdrVersion, kVersion);
  put_u32(p + kHdrImageSlot, h.image_slot);
  put_u64(p + kHdrEpoch, h.epoch);
  put_u32(p + kHdrCapacity, h.capacity);
  put_u32(p + kHdrDeltaPages, h.delta_pages);
  put_u64(p + kHdrImageChecksum, h.image_checksum);
  put_u64(p + kHdrChecksum, fnv1a(p, kHdrChecksum));
}

bool decode_header(const Page& page, Header* out) {
  const char* p = page.bytes.data();
  if (get_u64(p + kHdrMagic) != kMagic) return false;
  if (get_u32(p + kHdrVersion) != kVersion) return false;
  if (get_u64(p + kHdrChecksum) != fnv1a(p, kHdrChecksum)) return false;
  out->image_slot = get_u32(p + kHdrImageSlot);
  out->epoch = get_u64(p + kHdrEpoch);
  out->capacity = get_u32(p + kHdrCapacity);
  out->delta_pages = get_u32(p + kHdrDeltaPages);
  out->image_checksum = get_u64(p + kHdrImageChecksum);
  return out->image_slot < 2 && out->capacity > 0;
}

}  // namespace

ShadowFile::ShadowFile(BlockDevice* dev, const ShadowConfig& cfg)
    : dev_(dev),
      cfg_(cfg),
      image_pages_(image_pages_for(cfg.logical_capacity)),
      delta_start_(kHeaderSlots + 2 * image_pages_for(cfg.logical_capacity)),
      data_start_(delta_start_ + cfg.delta_region_pages) {
  phys_high_ = data_start_;
}

Result<std::unique_ptr<ShadowFile>> ShadowFile::format(BlockDevice* dev,
                                                       const ShadowConfig& cfg) {
  if (cfg.logical_capacity == 0 || cfg.delta_region_pages == 0)
    return Status::error(Code::kInvalidArgument, "empty shadow config");
  auto sf = std::unique_ptr<ShadowFile>(new ShadowFile(dev, cfg));
  if (sf->data_start_ >= dev->page_capacity())
    return Status::error(Code::kInvalidArgument, "device smaller than metadata regions");
  std::lock_guard lk(sf->mu_);
  if (auto s = sf->write_image_locked(/*new_epoch=*/0); !s.is_ok()) return s;
  sf->image_slot_ = 0;
  sf->image_epoch_ = 0;
  sf->epoch_ = 0;
  return sf;
}

Result<std::unique_ptr<ShadowFile>> ShadowFile::recover(BlockDevice* dev) {
  Header best;
  bool found = false;
  bool any_nonzero = false;
  for (uint32_t slot = 0; slot < kHeaderSlots; ++slot) {
    Page page;
    if (auto s = dev->read_page({slot}, &page); !s.is_ok()) return s;
    if (!page.zero()) any_nonzero = true;
    Header h;
    if (decode_header(page, &h) && (!found || h.epoch > best.epoch)) {
      best = h;
      found = true;
    }
  }
  if (!found) {
    return Status::error(any_nonzero ? Code::kCorruption : Code::kNotFound,
                         any_nonzero ? "no valid header slot" : "unformatted device");
  }

  ShadowConfig cfg{best.capacity, best.delta_pages};
  auto sf = std::unique_ptr<ShadowFile>(new ShadowFile(dev, cfg));
  sf->image_epoch_ = best.epoch;
  sf->epoch_ = best.epoch;
  sf->image_slot_ = best.image_slot;
  uint64_t image_checksum = 0;
  if (auto s = sf->load_stable(best.image_slot, &image_checksum); !s.is_ok()) return s;
  if (image_checksum != best.image_checksum)
    return Status::error(Code::kCorruption, "table image checksum mismatch");

  sf->replay_deltas();
  sf->finish_recovery();
  return sf;
}

Status ShadowFile::read(LogicalAddr a, Page* out) {
  if (!a.valid() || a.index >= cfg_.logical_capacity)
    return Status::error(Code::kOutOfRange, "logical " + std::to_string(a.index));
  uint32_t phys;
  {
    std::lock_guard lk(mu_);
    phys = a.index < table_.size() ? table_[a.index] : LogicalAddr::kInvalid;
  }
  if (phys == LogicalAddr::kInvalid) {
    out->bytes.assign(kPageSize, '\0');
    return Status::ok();
  }
  return dev_->read_page({phys}, out);
}

Status ShadowFile::write(LogicalAddr a, const Page& data) {
  if (!a.valid() || a.index >= cfg_.logical_capacity)
    return Status::error(Code::kOutOfRange, "logical " + std::to_string(a.index));
  if (data.bytes.size() != kPageSize)
    return Status::error(Code::kInvalidArgument, "short page");
  std::lock_guard lk(mu_);
  auto phys = alloc_phys_locked();
  if (!phys.is_ok()) return phys.status();
  if (auto s = dev_->write_page(phys.value(), data); !s.is_ok()) {
    free_.push_back(phys.value().index);
    return s;
  }
  if (a.index >= table_.size()) {
    table_.resize(a.index + 1, LogicalAddr::kInvalid);
    dirty_.resize(a.index + 1, false);
  }
  uint32_t old = table_[a.index];
  table_[a.index] = phys.value().index;
  if (old != LogicalAddr::kInvalid && (old >= stable_ref_.size() || !stable_ref_[old]))
    free_.push_back(old);  // the superseded page was never snapshotted
  if (!dirty_[a.index]) {
    dirty_[a.index] = true;
    ++dirty_count_;
  }
  return Status::ok();
}

Result<SnapshotEpoch> ShadowFile::flush() {
  std::lock_guard lk(mu_);
  SnapshotEpoch new_epoch = epoch_ + 1;

  // Data pages first: nothing may reference a page that could vanish.
  if (auto s = dev_->sync(); !s.is_ok()) return s;

  std::vector<std::pair<uint32_t, uint32_t>> pairs;
  pairs.reserve(dirty_count_);
  for (uint32_t a = 0; a < dirty_.size(); ++a)
    if (dirty_[a]) pairs.emplace_back(a, table_[a]);

  uint32_t rec_pages = delta_pages_for(pairs.size());
  if (delta_used_pages_ + rec_pages <= cfg_.delta_region_pages) {
    if (auto s = write_delta_locked(new_epoch, pairs); !s.is_ok()) return s;
    if (auto s = dev_->sync(); !s.is_ok()) return s;
    delta_used_pages_ += rec_pages;
    ++delta_record_count_;
  } else {
    if (auto s = write_image_locked(new_epoch); !s.is_ok()) return s;
    image_slot_ ^= 1u;
    image_epoch_ = new_epoch;
    delta_used_pages_ = 0;
    delta_record_count_ = 0;
  }

  epoch_ = new_epoch;
  // The snapshot now references exactly the current mappings.
  std::fill(stable_ref_.begin(), stable_ref_.end(), false);
  if (stable_ref_.size() < phys_high_) stable_ref_.resize(phys_high_, false);
  for (uint32_t a = 0; a < table_.size(); ++a)
    if (table_[a] != LogicalAddr::kInvalid) stable_ref_[table_[a]] = true;
  std::fill(dirty_.begin(), dirty_.end(), false);
  dirty_count_ = 0;
  rebuild_free_locked();
  return epoch_;
}

uint32_t ShadowFile::gc() {
  std::lock_guard lk(mu_);
  std::vector<bool> keep(phys_high_, false);
  for (uint32_t a = 0; a < table_.size(); ++a)
    if (table_[a] != LogicalAddr::kInvalid) keep[table_[a]] = true;
  for (uint32_t p = 0; p < stable_ref_.size() && p < phys_high_; ++p)
    if (stable_ref_[p]) keep[p] = true;
  for (uint32_t p : free_)
    if (p < phys_high_) keep[p] = true;  // already reclaimed
  uint32_t count = 0;
  for (uint32_t p = data_start_; p < phys_high_; ++p) {
    if (!keep[p]) {
      free_.push_back(p);
      ++count;
    }
  }
  return count;
}

SnapshotEpoch ShadowFile::epoch() const {
  std::lock_guard lk(mu_);
  return epoch_;
}

uint32_t ShadowFile::mapped_pages() const {
  std::lock_guard lk(mu_);
  uint32_t n = 0;
  for (uint32_t v : table_)
    if (v != LogicalAddr::kInvalid) ++n;
  return n;
}

uint64_t ShadowFile::table_bytes() const { return uint64_t{mapped_pages()} * 4; }

uint32_t ShadowFile::free_pages() const {
  std::lock_guard lk(mu_);
  return static_cast<uint32_t>(free_.size());
}

uint32_t ShadowFile::high_water() const {
  std::lock_guard lk(mu_);
  return phys_high_;
}

uint32_t ShadowFile::delta_records() const {
  std::lock_guard lk(mu_);
  return delta_record_count_;
}

PageId ShadowFile::current_phys(LogicalAddr a) const {
  std::lock_guard lk(mu_);
  if (!a.valid() || a.index >= table_.size()) return {};
  return {table_[a.index]};
}

bool ShadowFile::stable_referenced(PageId p) const {
  std::lock_guard lk(mu_);
  return p.valid() && p.index < stable_ref_.size() && stable_ref_[p.index];
}

Status ShadowFile::check_invariants() const {
  std::lock_guard lk(mu_);
  std::vector<bool> seen(phys_high_, false);
  for (uint32_t a = 0; a < table_.size(); ++a) {
    uint32_t p = table_[a];
    if (p == LogicalAddr::kInvalid) continue;
    if (p < data_start_ || p >= phys_high_)
      return Status::error(Code::kCorruption, "mapped page outside data region");
    if (seen[p])
      return Status::error(Code::kCorruption, "page table not injective");
    seen[p] = true;
  }
  for (uint32_t p : free_) {
    if (p < seen.size() && seen[p])
      return Status::error(Code::kCorruption, "mapped page on free list");
  }
  return Status::ok();
}

Result<PageId> ShadowFile::alloc_phys_locked() {
  if (!free_.empty()) {
    uint32_t p = free_.back();
    free_.pop_back();
    return PageId{p};
  }
  if (phys_high_ < dev_->page_capacity()) return PageId{phys_high_++};
  // Inline sweep, same as gc() but already under the lock.
  std::vector<bool> keep(phys_high_, false);
  for (uint32_t a = 0; a < table_.size(); ++a)
    if (table_[a] != LogicalAddr::kInvalid) keep[table_[a]] = true;
  for (uint32_t p = 0; p < stable_ref_.size() && p < phys_high_; ++p)
    if (stable_ref_[p]) keep[p] = true;
  for (uint32_t p = data_start_; p < phys_high_; ++p)
    if (!keep[p]) free_.push_back(p);
  if (!free_.empty()) {
    uint32_t p = free_.back();
    free_.pop_back();
    return PageId{p};
  }
  return Status::error(Code::kDeviceFull, "no free physical pages after gc");
}

void ShadowFile::rebuild_free_locked() {
  free_.clear();
  std::vector<bool> used(phys_high_, false);
  for (uint32_t a = 0; a < table_.size(); ++a)
    if (table_[a] != LogicalAddr::kInvalid) used[table_[a]] = true;
  for (uint32_t p = phys_high_; p-- > data_start_;)
    if (!used[p]) free_.push_back(p);  // LIFO pops lowest page first
}

Status ShadowFile::write_image_locked(SnapshotEpoch new_epoch) {
  uint32_t target_slot = (new_epoch == 0) ? 0 : (image_slot_ ^ 1u);
  uint32_t base = kHeaderSlots + target_slot * image_pages_;
  uint64_t checksum = 0xcbf29ce484222325ull;
  Page page;
  for (uint32_t i = 0; i < image_pages_; ++i) {
    page.bytes.assign(kPageSize, '\0');
    uint32_t first = i * (kPageSize / 4);
    for (uint32_t j = 0; j < kPageSize / 4; ++j) {
      uint32_t a = first + j;
      if (a >= cfg_.logical_capacity) break;
      uint32_t v = a < table_.size() ? table_[a] : LogicalAddr::kInvalid;
      put_u32(page.bytes.data() + j * 4, v);
    }
    std::size_t valid = std::min<uint64_t>(kPageSize, uint64_t{cfg_.logical_capacity} * 4 -
                                                          uint64_t{first} * 4);
    checksum = fnv1a(page.bytes.data(), valid, checksum);
    if (auto s = dev_->write_page({base + i}, page); !s.is_ok()) return s;
  }
  if (auto s = dev_->sync(); !s.is_ok()) return s;

  Header h{target_slot, new_epoch, cfg_.logical_capacity, cfg_.delta_region_pages, checksum};
  encode_header(h, &page);
  if (auto s = dev_->write_page({static_cast<uint32_t>(new_epoch % 2)}, page); !s.is_ok())
    return s;
  return dev_->sync();
}

Status ShadowFile::write_delta_locked(
    SnapshotEpoch new_epoch, const std::vector<std::pair<uint32_t, uint32_t>>& pairs) {
  std::size_t body = kDeltaFixedBytes + pairs.size() * 8;
  std::string rec(body, '\0');
  put_u64(rec.data(), new_epoch);
  put_u32(rec.data() + 8, static_cast<uint32_t>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    put_u32(rec.data() + 12 + i * 8, pairs[i].first);
    put_u32(rec.data() + 16 + i * 8, pairs[i].second);
  }
  put_u64(rec.data() + body - 8, fnv1a(rec.data(), body - 8));

  uint32_t rec_pages = delta_pages_for(pairs.size());
  Page page;
  for (uint32_t i = 0; i < rec_pages; ++i) {
    page.bytes.assign(kPageSize, '\0');
    std::size_t off = std::size_t{i} * kPageSize;
    std::size_t n = std::min(kPageSize, rec.size() - off);
    std::memcpy(page.bytes.data(), rec.data() + off, n);
    if (auto s = dev_->write_page({delta_start_ + delta_used_pages_ + i}, page); !s.is_ok())
      return s;
  }
  return Status::ok();
}

Status ShadowFile::load_stable(uint32_t image_slot, uint64_t* checksum_out) {
  uint32_t base = kHeaderSlots + image_slot * image_pages_;
  table_.assign(cfg_.logical_capacity, LogicalAddr::kInvalid);
  uint64_t checksum = 0xcbf29ce484222325ull;
  Page page;
  for (uint32_t i = 0; i < image_pages_; ++i) {
    if (auto s = dev_->read_page({base + i}, &page); !s.is_ok()) return s;
    uint32_t first = i * (kPageSize / 4);
    std::size_t valid = std::min<uint64_t>(
        kPageSize, uint64_t{cfg_.logical_capacity} * 4 - uint64_t{first} * 4);
    checksum = fnv1a(page.bytes.data(), valid, checksum);
    for (uint32_t j = 0; j < kPageSize / 4; ++j) {
      uint32_t a = first + j;
      if (a >= cfg_.logical_capacity) break;
      table_[a] = get_u32(page.bytes.data() + j * 4);
    }
  }
  *checksum_out = checksum;
  return Status::ok();
}

void ShadowFile::replay_deltas() {
  uint32_t pos = 0;
  SnapshotEpoch expected = image_epoch_ + 1;
  Page page;
  while (pos < cfg_.delta_region_pages) {
    if (!dev_->read_page({delta_start_ + pos}, &page).is_ok()) break;
    uint64_t seq = get_u64(page.bytes.data());
    if (seq != expected) break;
    uint32_t count = get_u32(page.bytes.data() + 8);
    std::size_t body = kDeltaFixedBytes + std::size_t{count} * 8;
    uint32_t rec_pages = delta_pages_for(count);
    if (pos + rec_pages > cfg_.delta_region_pages) break;
    std::string rec;
    rec.reserve(rec_pages * kPageSize);
    rec.append(page.bytes);
    bool read_ok = true;
    for (uint32_t i = 1; i < rec_pages; ++i) {
      if (!dev_->read_page({delta_start_ + pos + i}, &page).is_ok()) {
        read_ok = false;
        break;
      }
      rec.append(page.bytes);
    }
    if (!read_ok) break;
    if (get_u64(rec.data() + body - 8) != fnv1a(rec.data(), body - 8)) break;
    for (uint32_t i = 0; i < count; ++i) {
      uint32_t logical = get_u32(rec.data() + 12 + std::size_t{i} * 8);
      uint32_t phys = get_u32(rec.data() + 16 + std::size_t{i} * 8);
      if (logical < table_.size()) table_[logical] = phys;
    }
    epoch_ = expected;
    ++expected;
    pos += rec_pages;
    ++delta_record_count_;
  }
  delta_used_pages_ = pos;
}

void ShadowFile::finish_recovery() {
  // Trim the in-memory table to the highest mapped address; the free list is
  // the complement of stable-referenced pages.
  uint32_t high_addr = 0;
  phys_high_ = data_start_;
  for (uint32_t a = 0; a < table_.size(); ++a) {
    if (table_[a] != LogicalAddr::kInvalid) {
      high_addr = a + 1;
      phys_high_ = std::max(phys_high_, table_[a] + 1);
    }
  }
  table_.resize(high_addr);
  dirty_.assign(high_addr, false);
  dirty_count_ = 0;
  stable_ref_.assign(phys_high_, false);
  for (uint32_t a = 0; a < table_.size(); ++a)
    if (table_[a] != LogicalAddr::kInvalid) stable_ref_[table_[a]] = true;
  rebuild_free_locked();
}

}  // namespace weakkv
