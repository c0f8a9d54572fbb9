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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <set>

#include "weakkv/device.hpp"

using namespace weakkv;

namespace {

Page page_of(char fill) {
  Page p;
  p.bytes.assign(kPageSize, fill);
  return p;
}

Page read_ok(BlockDevice& dev, uint32_t idx) {
  Page p;
  REQUIRE(dev.read_page({idx}, &p).is_ok());
  return p;
}

}  // namespace

TEST_CASE("crash-sim: zero-init, read-your-write, last-write-wins") {
  CrashSimDevice dev(64);
  CHECK(read_ok(dev, 7).zero());

  REQUIRE(dev.write_page({3}, page_of('X')).is_ok());
  CHECK(read_ok(dev, 3).bytes == page_of('X').bytes);

  REQUIRE(dev.write_page({3}, page_of('Y')).is_ok());
  CHECK(read_ok(dev, 3).bytes == page_of('Y').bytes);
}

TEST_CASE("crash-sim: argument validation") {
  CrashSimDevice dev(8);
  Page p;
  CHECK(dev.read_page({9}, &p).code() == Code::kOutOfRange);
  CHECK(dev.write_page({9}, page_of('A')).code() == Code::kOutOfRange);
  Page small;
  small.bytes.assign(16, 'z');
  CHECK(dev.write_page({0}, small).code() == Code::kInvalidArgument);
}

TEST_CASE("crash-sim: unsynced write may vanish, synced write survives") {
  CrashSimDevice dev(8);
  REQUIRE(dev.write_page({0}, page_of('A')).is_ok());
  REQUIRE(dev.sync().is_ok());
  REQUIRE(dev.write_page({0}, page_of('B')).is_ok());

  SUBCASE("empty subset reverts to last sync") {
    dev.crash(SubsetChoice::none());
    CHECK(read_ok(dev, 0).bytes == page_of('A').bytes);
  }
  SUBCASE("full subset equals sync-then-crash") {
    dev.crash(SubsetChoice::all());
    CHECK(read_ok(dev, 0).bytes == page_of('B').bytes);
  }
}

TEST_CASE("crash-sim: per-write subset choice with explicit mask") {
  CrashSimDevice dev(8);
  REQUIRE(dev.write_page({0}, page_of('X')).is_ok());
  REQUIRE(dev.write_page({1}, page_of('Y')).is_ok());
  dev.crash(SubsetChoice::explicit_mask({false, true}));
  CHECK(read_ok(dev, 0).zero());  // page 0 keeps pre-write content
  CHECK(read_ok(dev, 1).bytes == page_of('Y').bytes);
}

TEST_CASE("crash-sim: sync barrier is total") {
  // write A; sync; write B: surviving sets are {A} and {A,B}, never {B}.
  CrashSimDevice dev(8);
  dev.enable_op_log();
  REQUIRE(dev.write_page({0}, page_of('A')).is_ok());
  REQUIRE(dev.sync().is_ok());
  REQUIRE(dev.write_page({1}, page_of('B')).is_ok());

  auto log = dev.take_op_log();
  auto img = image_from_log(log, log.size());
  REQUIRE(img.pending_count() == 1);
  for (bool keep_b : {false, true}) {
    auto survived = img.apply(SubsetChoice::explicit_mask({keep_b}));
    CHECK(survived.count(0) == 1);  // A always present
    CHECK(survived.count(1) == (keep_b ? 1u : 0u));
  }
}

TEST_CASE("crash-sim: sync on empty pending set is a no-op and idempotent") {
  CrashSimDevice dev(8);
  REQUIRE(dev.sync().is_ok());
  REQUIRE(dev.sync().is_ok());
  REQUIRE(dev.write_page({2}, page_of('Q')).is_ok());
  REQUIRE(dev.sync().is_ok());
  REQUIRE(dev.sync().is_ok());
  dev.crash(SubsetChoice::none());
  CHECK(read_ok(dev, 2).bytes == page_of('Q').bytes);
}

TEST_CASE("crash-sim: seeded selector is reproducible") {
  auto run = [] {
    CrashSimDevice dev(32);
    for (uint32_t i = 0; i < 16; ++i)
      REQUIRE(dev.write_page({i}, page_of(static_cast<char>('a' + i))).is_ok());
    dev.crash(SubsetChoice::seeded(42));
    std::set<uint32_t> alive;
    for (uint32_t i = 0; i < 16; ++i)
      if (!read_ok(dev, i).zero()) alive.insert(i);
    return alive;
  };
  CHECK(run() == run());
}

TEST_CASE("crash-sim: capture at op index matches live image") {
  CrashSimDevice dev(8);
  dev.arm_capture(2);  // after the second operation
  REQUIRE(dev.write_page({0}, page_of('A')).is_ok());
  REQUIRE(dev.sync().is_ok());
  REQUIRE(dev.write_page({1}, page_of('B')).is_ok());
  auto img = dev.take_captured();
  REQUIRE(img.has_value());
  CHECK(img->durable.count(0) == 1);
  CHECK(img->pending.empty());
}

TEST_CASE("crash-sim: injected failures") {
  CrashSimDevice dev(8);
  dev.inject_sync_failures(1);
  CHECK(dev.sync().code() == Code::kIOError);
  CHECK(dev.sync().is_ok());
  dev.inject_write_failures(1);
  CHECK(dev.write_page({0}, page_of('A')).code() == Code::kIOError);
  CHECK(dev.write_page({0}, page_of('A')).is_ok());
}

TEST_CASE("file device: read-after-write coherence and zero fill") {
  std::string path = "/tmp/weakkv_test_device.db";
  std::remove(path.c_str());
  auto r = FileDevice::open(path, 1024);
  REQUIRE(r.is_ok());
  auto dev = r.take();

  CHECK(read_ok(*dev, 10).zero());
  REQUIRE(dev->write_page({10}, page_of('Z')).is_ok());
  CHECK(read_ok(*dev, 10).bytes == page_of('Z').bytes);
  REQUIRE(dev->sync().is_ok());
  CHECK(read_ok(*dev, 11).zero());
  CHECK(dev->write_page({2048}, page_of('A')).code() == Code::kOutOfRange);
  std::remove(path.c_str());
}
