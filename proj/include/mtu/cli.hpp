#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtu/config.hpp"

namespace mtu::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation or runtime error
inline constexpr int kExitUsage = 2;    // bad flags

/// The small model used for desk-scale runs: N=2, 8 channels, D=4.
ModelConfig toy_config();

/// Seed precedence: explicit flag, then MTU_SEED, then `fallback`.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback = 0);

/// Backend precedence: explicit flag, then MTU_DEVICE, then "host".
std::string resolve_backend(const std::optional<std::string>& flag);

/// Parses and dispatches; never throws. Errors go to stderr.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace mtu::cli
