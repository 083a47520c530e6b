#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "smforge/losses.hpp"

namespace smforge::cli {

/// Exit statuses of run_command.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // failed invariant or runtime error
constexpr int kExitUsage = 2;    // unknown flag or malformed command line

/// Runs one subcommand. `args` excludes the program name, e.g.
/// {"simulate", "--out", "run1"}.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct GradcheckRow {
    loss::LossKind kind;
    double max_rel_error = 0.0;
};

/// Worst finite-difference relative error of each loss over `pairs` random
/// side x side image pairs.
[[nodiscard]] std::vector<GradcheckRow> gradcheck(int pairs, int side, std::uint64_t seed,
                                                  double epsilon = 1e-6);

}  // namespace smforge::cli
