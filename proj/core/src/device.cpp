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
#include "weakkv/device.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace weakkv {

namespace {
Status check_page_args(PageId p, uint32_t capacity, const Page* data) {
  if (!p.valid() || p.index >= capacity)
    return Status::error(Code::kOutOfRange, "page " + std::to_string(p.index));
  if (data != nullptr && data->bytes.size() != kPageSize)
    return Status::error(Code::kInvalidArgument, "short page");
  return Status::ok();
}
}  // namespace

// ---------------------------------------------------------------- FileDevice

Result<std::unique_ptr<FileDevice>> FileDevice::open(const std::string& path,
                                                     uint32_t page_capacity) {
  int fd = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd < 0)
    return Status::error(Code::kIOError, path + ": " + std::strerror(errno));
  return std::unique_ptr<FileDevice>(new FileDevice(fd, page_capacity));
}

FileDevice::~FileDevice() {
  if (fd_ >= 0) ::close(fd_);
}

Status FileDevice::read_page(PageId p, Page* out) {
  if (auto s = check_page_args(p, capacity_, nullptr); !s.is_ok()) return s;
  out->bytes.resize(kPageSize);
  std::size_t done = 0;
  while (done < kPageSize) {
    ssize_t n = ::pread(fd_, out->bytes.data() + done, kPageSize - done,
                        static_cast<off_t>(p.index) * kPageSize + done);
    if (n < 0) {
      if (errno == EINTR) continue;
      return Status::error(Code::kIOError, std::strerror(errno));
    }
    if (n == 0) {  // beyond EOF: zero-initialized region
      std::memset(out->bytes.data() + done, 0, kPageSize - done);
      break;
    }
    done += static_cast<std::size_t>(n);
  }
  return Status::ok();
}

Status FileDevice::write_page(PageId p, const Page& data) {
  if (auto s = check_page_args(p, capacity_, &data); !s.is_ok()) return s;
  std::size_t done = 0;
  while (done < kPageSize) {
    ssize_t n = ::pwrite(fd_, data.bytes.data() + done, kPageSize - done,
                         static_cast<off_t>(p.index) * kPageSize + done);
    if (n < 0) {
      if (errno == EINTR) continue;
      return Status::error(Code::kIOError, std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  return Status::ok();
}

Status FileDevice::sync() {
  if (::fdatasync(fd_) != 0)
    return Status::error(Code::kIOError, std::strerror(errno));
  return Status::ok();
}

// ------------------------------------------------------------- CrashSimDevice

std::unordered_map<uint32_t, std::string> CrashImage::apply(
    const SubsetChoice& choice) const {
  std::unordered_map<uint32_t, std::string> out = durable;
  std::mt19937_64 rng(choice.seed);
  for (std::size_t i = 0; i < pending.size(); ++i) {
    bool keep = false;
    switch (choice.mode) {
      case SubsetChoice::Mode::kNone: keep = false; break;
      case SubsetChoice::Mode::kAll: keep = true; break;
      case SubsetChoice::Mode::kSeeded: keep = (rng() & 1) != 0; break;
      case SubsetChoice::Mode::kExplicit:
        keep = i < choice.mask.size() && choice.mask[i];
        break;
    }
    if (keep) out[pending[i].first] = pending[i].second;  // last write wins
  }
  return out;
}

std::unique_ptr<CrashSimDevice> CrashSimDevice::from_image(
    const CrashImage& image, const SubsetChoice& choice, uint32_t page_capacity) {
  auto dev = std::make_unique<CrashSimDevice>(page_capacity);
  dev->durable_ = image.apply(choice);
  return dev;
}

Status CrashSimDevice::read_page(PageId p, Page* out) {
  if (auto s = check_page_args(p, capacity_, nullptr); !s.is_ok()) return s;
  std::lock_guard lk(mu_);
  // Live view: latest pending write if any, else durable, else zeros.
  for (auto it = pending_.rbegin(); it != pending_.rend(); ++it) {
    if (it->first == p.index) {
      out->bytes = it->second;
      return Status::ok();
    }
  }
  if (auto it = durable_.find(p.index); it != durable_.end()) {
    out->bytes = it->second;
    return Status::ok();
  }
  out->bytes.assign(kPageSize, '\0');
  return Status::ok();
}

Status CrashSimDevice::write_page(PageId p, const Page& data) {
  if (auto s = check_page_args(p, capacity_, &data); !s.is_ok()) return s;
  std::lock_guard lk(mu_);
  if (write_failures_ > 0) {
    --write_failures_;
    return Status::error(Code::kIOError, "injected write failure");
  }
  pending_.emplace_back(p.index, data.bytes);
  if (op_log_enabled_) op_log_.push_back({false, p.index, data.bytes});
  ++op_count_;
  if (capture_armed_ && op_count_ >= capture_at_) {
    captured_ = image_locked();
    capture_armed_ = false;
  }
  return Status::ok();
}

Status CrashSimDevice::sync() {
  std::lock_guard lk(mu_);
  if (sync_failures_ > 0) {
    --sync_failures_;
    return Status::error(Code::kIOError, "injected sync failure");
  }
  for (auto& [page, bytes] : pending_) durable_[page] = std::move(bytes);
  pending_.clear();
  if (op_log_enabled_) op_log_.push_back({true, 0, {}});
  ++op_count_;
  if (capture_armed_ && op_count_ >= capture_at_) {
    captured_ = image_locked();
    capture_armed_ = false;
  }
  return Status::ok();
}

void CrashSimDevice::crash(const SubsetChoice& choice) {
  std::lock_guard lk(mu_);
  CrashImage img{durable_, pending_};
  durable_ = img.apply(choice);
  pending_.clear();
}

void CrashSimDevice::arm_capture(uint64_t at_op) {
  std::lock_guard lk(mu_);
  capture_at_ = at_op;
  capture_armed_ = true;
  captured_.reset();
}

std::optional<CrashImage> CrashSimDevice::take_captured() {
  std::lock_guard lk(mu_);
  auto out = std::move(captured_);
  captured_.reset();
  return out;
}

CrashImage CrashSimDevice::snapshot_image() const {
  std::lock_guard lk(mu_);
  return image_locked();
}

uint64_t CrashSimDevice::op_count() const {
  std::lock_guard lk(mu_);
  return op_count_;
}

void CrashSimDevice::enable_op_log() {
  std::lock_guard lk(mu_);
  op_log_enabled_ = true;
}

std::vector<DeviceOp> CrashSimDevice::take_op_log() {
  std::lock_guard lk(mu_);
  return std::move(op_log_);
}

void CrashSimDevice::inject_sync_failures(int n) {
  std::lock_guard lk(mu_);
  sync_failures_ = n;
}

void CrashSimDevice::inject_write_failures(int n) {
  std::lock_guard lk(mu_);
  write_failures_ = n;
}

CrashImage CrashSimDevice::image_locked() const { return {durable_, pending_}; }

CrashImage image_from_log(const std::vector<DeviceOp>& log, std::size_t prefix_len) {
  CrashImage img;
  prefix_len = std::min(prefix_len, log.size());
  for (std::size_t i = 0; i < prefix_len; ++i) {
    const DeviceOp& op = log[i];
    if (op.is_sync) {
      for (auto& [page, bytes] : img.pending) img.durable[page] = std::move(bytes);
      img.pending.clear();
    } else {
      img.pending.emplace_back(op.page, op.bytes);
    }
  }
  return img;
}

}  // namespace weakkv
