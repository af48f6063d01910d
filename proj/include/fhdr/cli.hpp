// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fhdr/training.hpp"

namespace fhdr::cli {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Bad flags or configuration; maps to kExitUsage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using KeyValues = std::map<std::string, std::string, std::less<>>;

/// Flat key=value text. Blank lines and lines starting with '#' are
/// ignored; whitespace around keys and values is trimmed.
KeyValues parse_key_values(std::string_view text);

/// Typed assignment of known keys. Unknown keys and bad values throw
/// UsageError naming the key.
void apply_train_config(const KeyValues& values, TrainConfig& cfg);

/// key=value dump of every TrainConfig field, readable by parse_key_values.
std::string format_train_config(const TrainConfig& cfg);

/// Entry point shared by the fhdr binary and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fhdr::cli
