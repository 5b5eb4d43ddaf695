// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary container shared by checkpoints and diagnostic snapshots.
//
// Layout (all integers little-endian):
//
//   magic      8 bytes  "HCLABARC"
//   version    u32      kArchiveVersion
//   nfields    u32
//   field      u32 key_len, key bytes, u32 value_len, value bytes
//   narrays    u32
//   array      u32 name_len, name bytes, u32 rank, u64 dims[rank],
//              f64 data[prod(dims)] (IEEE-754 bit pattern)
//
// Fields and arrays keep their insertion order, so decode(encode(a)) == a and
// encode(decode(bytes)) == bytes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hclab {

inline constexpr char kArchiveMagic[8] = {'H', 'C', 'L', 'A', 'B', 'A', 'R', 'C'};
inline constexpr std::uint32_t kArchiveVersion = 1;

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IncompatibleVersionError : public ArchiveError {
 public:
  explicit IncompatibleVersionError(std::uint32_t found);
  std::uint32_t found() const { return found_; }

 private:
  std::uint32_t found_;
};

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  bool operator==(const NamedArray&) const = default;
};

struct Archive {
  std::vector<std::pair<std::string, std::string>> fields;
  std::vector<NamedArray> arrays;

  void set_field(const std::string& key, std::string value);
  std::optional<std::string> field(const std::string& key) const;
  const NamedArray* find(const std::string& name) const;
  const NamedArray& at(const std::string& name) const;

  bool operator==(const Archive&) const = default;
};

std::string encode_archive(const Archive& archive);
Archive decode_archive(const std::string& bytes);

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

}  // namespace hclab
