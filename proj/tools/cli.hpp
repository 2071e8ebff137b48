// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>

namespace rahf::cli {

/// Entry point of the `rahf` tool. Results go to `out` as key=value lines,
/// diagnostics to `err`. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// --seed when given, else RAHF_SEED, else 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag);

}  // namespace rahf::cli
