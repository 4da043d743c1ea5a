#pragma once

#include "wlforge/datasets.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace wlforge {

/// Exit codes of parse_and_dispatch.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one wlforge command. `args` excludes the program name.
int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Counts per filter_reason as a markdown table, or "no weak-label records"
/// for a manifest without entries. Entries without provenance are skipped;
/// a non-empty manifest with no provenance at all is an error.
std::string verdict_stats(const DatasetManifest& manifest);

}  // namespace wlforge
