// Copyright 2026 The hclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hclab/model.hpp"
#include "hclab/train.hpp"

namespace hclab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitVerifyFailed = 2;
inline constexpr int kExitNan = 3;

inline constexpr const char* kSeedEnv = "HCLAB_SEED";
inline constexpr const char* kResolvedFile = "resolved.cfg";

// Every model and training setting under one flat key space. Keys use
// underscores; on the command line each is also accepted as --key-with-dashes.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::map<std::string, std::string> given;  // keys set by file or flags

  // Applies one key=value; throws std::invalid_argument on unknown keys or
  // unparsable values.
  void set(const std::string& key, const std::string& value);
  bool was_given(const std::string& key) const { return given.count(key) > 0; }

  // Fixed key order, one `key=value` per line; reading it back reproduces
  // this config exactly.
  std::string resolved_text() const;
};

// Known keys in resolved-file order.
const std::vector<std::string>& config_keys();

// Parses `key = value` lines; '#' starts a comment. Throws on malformed
// lines, naming the line number.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
void load_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Fills the seed from HCLAB_SEED when neither file nor flags set it.
void apply_seed_env(RunConfig& cfg);

// Subcommand entry points. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hclab::cli
