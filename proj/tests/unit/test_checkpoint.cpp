#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "kcciol/checkpoint.hpp"
#include "kcciol/errors.hpp"
#include "kcciol/metalearner.hpp"

using namespace kcciol;
using ad::Vector;

namespace {

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t crc32_reference(std::string_view bytes) {
  std::uint32_t c = 0xFFFFFFFFu;
  for (unsigned char b : bytes) {
    c ^= b;
    for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
  }
  return ~c;
}

std::uint32_t read_u32(std::string_view s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]);
  return v;
}

void write_u32(std::string& s, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s[at + static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

model::ParameterStore sample_store() {
  model::ModelSpec s;
  s.layer_sizes = {3, 5, 4, 2};
  s.split_index = 2;
  model::ParameterStore p = model::build_model(s, 8);
  Vector v = p.values();
  v[0] = -0.0;
  v[1] = 1e-310;  // subnormal survives the round trip
  p.set_values(v);
  return p;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / (std::string("kcciol_test_") + name);
}

}  // namespace

TEST(Checkpoint, LayoutStartsWithMagicVersionAndEndsWithCrc) {
  const std::string bytes = model::encode_checkpoint(sample_store(), nullptr, "abc");
  EXPECT_EQ(bytes.substr(0, 4), "KCML");
  EXPECT_EQ(read_u32(bytes, 4), 1u);
  const std::uint32_t text_len = read_u32(bytes, 8);
  const std::string text = bytes.substr(12, text_len);
  EXPECT_NE(text.find("layers=3,5,4,2"), std::string::npos) << text;
  EXPECT_NE(text.find("split=2"), std::string::npos);
  EXPECT_NE(text.find("activation=relu/identity"), std::string::npos);
  EXPECT_NE(text.find("config_hash=abc"), std::string::npos);
  EXPECT_EQ(read_u32(bytes, bytes.size() - 4), crc32_reference(std::string_view(bytes).substr(0, bytes.size() - 4)));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const model::ParameterStore p = sample_store();
  const Mask mask = meta::get_mask(p.values(), 0.3);
  const auto path = temp_file("roundtrip.kcml");
  model::save_checkpoint(path, p, &mask, "h1");
  const model::Checkpoint c = model::load_checkpoint(path);
  ASSERT_EQ(c.params.size(), p.size());
  EXPECT_EQ(std::memcmp(c.params.values().data(), p.values().data(), sizeof(double) * static_cast<std::size_t>(p.size())), 0);
  EXPECT_EQ(c.params.spec().layer_sizes, p.spec().layer_sizes);
  EXPECT_EQ(c.params.spec().split_index, p.spec().split_index);
  ASSERT_TRUE(c.mask.has_value());
  EXPECT_EQ(*c.mask, mask);
  EXPECT_EQ(c.mask->count(), mask.count());
  EXPECT_EQ(c.config_hash, "h1");
  std::filesystem::remove(path);
}

TEST(Checkpoint, AbsentMaskIsReportedAbsent) {
  const model::Checkpoint c = model::decode_checkpoint(model::encode_checkpoint(sample_store(), nullptr));
  EXPECT_FALSE(c.mask.has_value());
}

TEST(Checkpoint, MaskBitsArePackedLsbFirst) {
  const model::ParameterStore p = sample_store();
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(p.size()), 0);
  bits[0] = bits[9] = 1;
  const Mask mask(bits, 2.0 / static_cast<double>(p.size()));
  const std::string with = model::encode_checkpoint(p, &mask);
  const std::string without = model::encode_checkpoint(p, nullptr);
  const std::size_t at = without.size() - 4;
  EXPECT_EQ(static_cast<unsigned char>(with[at]), 0x4D);
  EXPECT_EQ(static_cast<unsigned char>(with[at + 1]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(with[at + 2]), 0x02);
  EXPECT_EQ(with.size(), without.size() + 1 + (static_cast<std::size_t>(p.size()) + 7) / 8);
}

TEST(Checkpoint, EveryFlippedByteIsAFormatError) {
  const model::ParameterStore p = sample_store();
  const Mask mask = meta::get_mask(p.values(), 0.5);
  const std::string good = model::encode_checkpoint(p, &mask);
  for (std::size_t i = 0; i < good.size(); ++i) {
    std::string bad = good;
    bad[i] = static_cast<char>(bad[i] ^ 0x5A);
    EXPECT_THROW(model::decode_checkpoint(bad), FormatError) << "byte " << i;
  }
}

TEST(Checkpoint, TruncationIsAFormatError) {
  const std::string good = model::encode_checkpoint(sample_store(), nullptr);
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{11}, good.size() / 2, good.size() - 1}) {
    EXPECT_THROW(model::decode_checkpoint(good.substr(0, len)), FormatError) << len;
  }
}

TEST(Checkpoint, VersionMismatchWithValidCrcIsAFormatError) {
  std::string bytes = model::encode_checkpoint(sample_store(), nullptr);
  write_u32(bytes, 4, 2);
  write_u32(bytes, bytes.size() - 4, crc32_reference(std::string_view(bytes).substr(0, bytes.size() - 4)));
  EXPECT_THROW(model::decode_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, MissingFileIsReported) {
  EXPECT_THROW(model::load_checkpoint(temp_file("does_not_exist.kcml")), Error);
}
