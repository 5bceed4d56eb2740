#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace hilml {

struct RunOptions {
  std::filesystem::path data;
  std::filesystem::path problem;
  std::filesystem::path out;
  std::optional<std::filesystem::path> corpus;
  std::string keywords;
  std::uint64_t seed = 0;
  unsigned workers = 0;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNothingScored = 2;

/// Headless search: writes solutions.json, ranking.txt, explanations/ and,
/// with a corpus, augment_candidates.json into `out`.  Diagnostics go to `err`.
int run_headless(const RunOptions& options, std::ostream& err);

}  // namespace hilml
