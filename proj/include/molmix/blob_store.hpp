// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace molmix {

// Hex SHA-256 of the given text.
std::string sha256_hex(std::string_view text);
std::string sha256_hex(std::span<const std::byte> bytes);

// Cache key for a molecule under a given configuration version: the first
// 128 bits of SHA-256(canonical_key + '\n' + config_version), hex encoded.
std::string content_key(std::string_view canonical_key,
                        std::string_view config_version);

/// One file per key under `<root>/<2-hex-prefix>/<key>.bin`.
///
/// File layout: 8-byte magic, u32 format version, u32 reserved (0),
/// u64 payload length, 8-byte checksum (leading bytes of SHA-256 of the
/// payload), payload. Writes go to a unique temp file and are renamed into
/// place, so concurrent writers of one key leave exactly one complete file.
class BlobStore {
 public:
  using Magic = std::array<char, 8>;

  BlobStore(std::filesystem::path root, Magic magic, std::uint32_t version);

  // nullopt on miss; a corrupted or foreign file counts as a miss and bumps
  // corrupted().
  std::optional<std::vector<std::byte>> get(const std::string &key) const;
  void put(const std::string &key, std::span<const std::byte> payload) const;

  std::filesystem::path path_for(const std::string &key) const;
  const std::filesystem::path &root() const { return root_; }

  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }
  std::uint64_t corrupted() const { return corrupted_.load(); }

 private:
  std::filesystem::path root_;
  Magic magic_;
  std::uint32_t version_;
  mutable std::atomic<std::uint64_t> hits_ { 0 };
  mutable std::atomic<std::uint64_t> misses_ { 0 };
  mutable std::atomic<std::uint64_t> corrupted_ { 0 };
  mutable std::atomic<std::uint64_t> temp_counter_ { 0 };
};

}  // namespace molmix
