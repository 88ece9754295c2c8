#include <gtest/gtest.h>

#include <ringrt/native_backend.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <vector>

using namespace ringrt;

#if !RINGRT_HAVE_NATIVE

TEST(NativeBackend, UnavailableWithoutBuildFlag) {
  EXPECT_FALSE(native_available());
  NativeConfig cfg;
  cfg.path = "/dev/null";
  EXPECT_THROW(native_open(cfg), UnsupportedPlatform);
}

#else

namespace {

constexpr std::uint32_t kBlock = 4096;
constexpr std::uint32_t kBlocks = 256;

class NativeFile : public ::testing::Test {
 protected:
  void SetUp() override {
    path_ = ::testing::TempDir() + "ringrt_native_" + std::to_string(::getpid());
    data_.resize(std::size_t{kBlock} * kBlocks);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] = static_cast<std::uint8_t>((i * 131) ^ (i >> 12));
    const int fd = ::open(path_.c_str(), O_CREAT | O_TRUNC | O_WRONLY, 0600);
    ASSERT_GE(fd, 0);
    ASSERT_EQ(::write(fd, data_.data(), data_.size()), static_cast<ssize_t>(data_.size()));
    ::close(fd);
    be_ = open_backend(true);
    if (!be_) be_ = open_backend(false);
    if (!be_) GTEST_SKIP() << "io_uring not usable here: " << why_;
  }
  void TearDown() override {
    be_.reset();
    std::remove(path_.c_str());
  }

  std::unique_ptr<NativeBackend> open_backend(bool direct) {
    NativeConfig cfg;
    cfg.path = path_;
    cfg.direct_io = direct;
    cfg.ring_entries = 64;
    try {
      return native_open(cfg);
    } catch (const std::exception& e) {
      why_ = e.what();
      return nullptr;
    }
  }

  std::vector<Completion> wait_for(std::size_t n) {
    std::vector<Completion> out;
    while (out.size() < n) {
      be_->progress();
      for (auto& c : be_->reap_completions(n - out.size())) out.push_back(c);
    }
    return out;
  }

  IoRequest read_req(std::uint32_t buf, std::uint64_t block, std::uint64_t tag) {
    IoRequest r;
    r.op = OpKind::Read;
    r.offset = block * kBlock;
    r.length = kBlock;
    r.buffer_id = buf;
    r.user_data = tag;
    return r;
  }

  std::string path_;
  std::string why_;
  std::vector<std::uint8_t> data_;
  std::unique_ptr<NativeBackend> be_;
};

}  // namespace

TEST_F(NativeFile, ReadMatchesFileContents) {
  EXPECT_TRUE(native_available());
  EXPECT_EQ(be_->capacity_bytes(), data_.size());
  const auto buf = be_->add_buffer(kBlock);
  ASSERT_TRUE(be_->push_submission(read_req(buf, 3, 99)).accepted());
  const auto done = wait_for(1);
  ASSERT_TRUE(done[0].ok());
  EXPECT_EQ(done[0].user_data, 99u);
  EXPECT_EQ(std::memcmp(be_->buffer(buf).data(), data_.data() + 3 * kBlock, kBlock), 0);
}

TEST_F(NativeFile, ManyRandomReads) {
  std::vector<std::uint32_t> bufs;
  for (int i = 0; i < 32; ++i) bufs.push_back(be_->add_buffer(kBlock));
  SplitMix rng(9);
  for (int round = 0; round < 1000 / 32 + 1; ++round) {
    std::vector<std::uint64_t> blocks;
    for (std::size_t i = 0; i < bufs.size(); ++i) {
      blocks.push_back(rng.below(kBlocks));
      ASSERT_TRUE(be_->push_submission(read_req(bufs[i], blocks.back(), i)).accepted());
    }
    for (const auto& c : wait_for(bufs.size())) {
      ASSERT_TRUE(c.ok()) << c.error_code;
      const auto i = c.user_data;
      ASSERT_EQ(std::memcmp(be_->buffer(bufs[i]).data(), data_.data() + blocks[i] * kBlock, kBlock), 0);
    }
  }
}

TEST_F(NativeFile, MisalignedDirectReadRejected) {
  if (!be_->config().direct_io) GTEST_SKIP() << "filesystem refuses O_DIRECT";
  const auto buf = be_->add_buffer(kBlock);
  IoRequest r = read_req(buf, 0, 0);
  r.offset = 512 + kBlock;
  EXPECT_THROW(be_->push_submission(r), AlignmentError);
}

#endif
