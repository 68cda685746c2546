// Batch command-line front end. Subcommands: quantile-ci, test, sensitivity,
// population-ci, simulate, replay.
//
// Each run writes PREFIX.json, PREFIX.csv and PREFIX.manifest.json. The
// manifest holds every resolved flag, the seeds, the input digest and timing;
// `replay --manifest M --output P` re-runs it and must reproduce the JSON and
// CSV byte for byte.
//
// Exit codes: 0 ok, 2 input error, 3 flag error, 4 internal invariant failure.

#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace iteq {

inline constexpr std::string_view kLibraryVersion = "0.1.0";

/// Environment variable overriding the default Monte Carlo seed.
inline constexpr const char* kSeedEnv = "ITEQ_SEED";

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

}  // namespace iteq
