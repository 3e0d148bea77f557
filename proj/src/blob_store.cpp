// SPDX-License-Identifier: Apache-2.0

#include "molmix/blob_store.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <system_error>
#include <thread>

#include "molmix/error.hpp"

namespace molmix {
namespace {

using Digest = std::array<unsigned char, 32>;

Digest sha256(const void *data, std::size_t size) {
  Digest out {};
  unsigned int len = 0;
  if (EVP_Digest(data, size, out.data(), &len, EVP_sha256(), nullptr) != 1
      || len != out.size()) {
    throw Error(ErrorCategory::kInternal, "SHA-256 computation failed");
  }
  return out;
}

std::string to_hex(const unsigned char *p, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out += kDigits[p[i] >> 4];
    out += kDigits[p[i] & 0xF];
  }
  return out;
}

constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 8 + 8;

}  // namespace

std::string sha256_hex(std::string_view text) {
  const auto d = sha256(text.data(), text.size());
  return to_hex(d.data(), d.size());
}

std::string sha256_hex(std::span<const std::byte> bytes) {
  const auto d = sha256(bytes.data(), bytes.size());
  return to_hex(d.data(), d.size());
}

std::string content_key(std::string_view canonical_key,
                        std::string_view config_version) {
  std::string text(canonical_key);
  text += '\n';
  text += config_version;
  const auto d = sha256(text.data(), text.size());
  return to_hex(d.data(), 16);
}

BlobStore::BlobStore(std::filesystem::path root, Magic magic,
                     std::uint32_t version)
    : root_(std::move(root)), magic_(magic), version_(version) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path BlobStore::path_for(const std::string &key) const {
  if (key.size() < 2) {
    throw DataError("cache key too short: '" + key + "'");
  }
  return root_ / key.substr(0, 2) / (key + ".bin");
}

std::optional<std::vector<std::byte>>
BlobStore::get(const std::string &key) const {
  const auto path = path_for(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    ++misses_;
    return std::nullopt;
  }
  std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());

  auto corrupt = [&]() -> std::optional<std::vector<std::byte>> {
    ++corrupted_;
    ++misses_;
    return std::nullopt;
  };
  if (raw.size() < kHeaderSize
      || std::memcmp(raw.data(), magic_.data(), magic_.size()) != 0) {
    return corrupt();
  }
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  std::memcpy(&version, raw.data() + 8, 4);
  std::memcpy(&length, raw.data() + 16, 8);
  if (version != version_ || length != raw.size() - kHeaderSize) {
    return corrupt();
  }
  const char *payload = raw.data() + kHeaderSize;
  const auto digest = sha256(payload, length);
  if (std::memcmp(digest.data(), raw.data() + 24, 8) != 0) {
    return corrupt();
  }
  ++hits_;
  std::vector<std::byte> out(length);
  std::memcpy(out.data(), payload, length);
  return out;
}

void BlobStore::put(const std::string &key,
                    std::span<const std::byte> payload) const {
  const auto path = path_for(key);
  std::filesystem::create_directories(path.parent_path());

  std::ostringstream tmp_name;
  tmp_name << path.filename().string() << ".tmp." << ::getpid() << '.'
           << std::hash<std::thread::id> {}(std::this_thread::get_id()) << '.'
           << temp_counter_++;
  const auto tmp = path.parent_path() / tmp_name.str();

  const std::uint32_t reserved = 0;
  const std::uint64_t length = payload.size();
  const auto digest = sha256(payload.data(), payload.size());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot write cache file " + tmp.string());
    }
    out.write(magic_.data(), magic_.size());
    out.write(reinterpret_cast<const char *>(&version_), 4);
    out.write(reinterpret_cast<const char *>(&reserved), 4);
    out.write(reinterpret_cast<const char *>(&length), 8);
    out.write(reinterpret_cast<const char *>(digest.data()), 8);
    out.write(reinterpret_cast<const char *>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) {
      throw DataError("short write to cache file " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot publish cache file " + path.string());
  }
}

}  // namespace molmix
