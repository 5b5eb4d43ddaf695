// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#include "hclab/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace hclab {
namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

void put_string(std::string& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  void expect_magic() {
    need(sizeof(kArchiveMagic));
    if (std::memcmp(bytes_.data() + pos_, kArchiveMagic, sizeof(kArchiveMagic)) != 0) {
      throw ArchiveError("not an hclab archive (bad magic)");
    }
    pos_ += sizeof(kArchiveMagic);
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ArchiveError("truncated archive");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

IncompatibleVersionError::IncompatibleVersionError(std::uint32_t found)
    : ArchiveError("archive format version " + std::to_string(found) +
                   " is not supported (expected " +
                   std::to_string(kArchiveVersion) + ")"),
      found_(found) {}

void Archive::set_field(const std::string& key, std::string value) {
  for (auto& [k, v] : fields) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  fields.emplace_back(key, std::move(value));
}

std::optional<std::string> Archive::field(const std::string& key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const NamedArray* Archive::find(const std::string& name) const {
  auto it = std::find_if(arrays.begin(), arrays.end(),
                         [&](const NamedArray& a) { return a.name == name; });
  return it == arrays.end() ? nullptr : &*it;
}

const NamedArray& Archive::at(const std::string& name) const {
  if (const NamedArray* a = find(name)) return *a;
  throw ArchiveError("archive has no array named '" + name + "'");
}

std::string encode_archive(const Archive& archive) {
  std::string out(kArchiveMagic, sizeof(kArchiveMagic));
  put_le<std::uint32_t>(out, kArchiveVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(archive.fields.size()));
  for (const auto& [k, v] : archive.fields) {
    put_string(out, k);
    put_string(out, v);
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(archive.arrays.size()));
  for (const NamedArray& a : archive.arrays) {
    std::uint64_t count = 1;
    for (auto d : a.dims) count *= d;
    if (count != a.data.size()) {
      throw ArchiveError("array '" + a.name + "' dims do not match its data");
    }
    put_string(out, a.name);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) put_le<std::uint64_t>(out, d);
    for (double x : a.data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

Archive decode_archive(const std::string& bytes) {
  Reader in(bytes);
  in.expect_magic();
  const auto version = in.get<std::uint32_t>();
  if (version != kArchiveVersion) throw IncompatibleVersionError(version);
  Archive archive;
  const auto nfields = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < nfields; ++i) {
    std::string key = in.get_string();
    std::string value = in.get_string();
    archive.fields.emplace_back(std::move(key), std::move(value));
  }
  const auto narrays = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < narrays; ++i) {
    NamedArray a;
    a.name = in.get_string();
    const auto rank = in.get<std::uint32_t>();
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.dims.push_back(in.get<std::uint64_t>());
      count *= a.dims.back();
    }
    if (count > bytes.size() / sizeof(double)) throw ArchiveError("truncated archive");
    a.data.resize(count);
    for (auto& x : a.data) x = std::bit_cast<double>(in.get<std::uint64_t>());
    archive.arrays.push_back(std::move(a));
  }
  if (!in.at_end()) throw ArchiveError("trailing bytes after archive");
  return archive;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_archive(archive);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArchiveError("failed writing " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_archive(bytes);
}

}  // namespace hclab
