#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace agentrouter {

// Training and the finite-difference checks are specified for 64-bit floats;
// the whole numeric core runs on double.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Malformed or inconsistent input data (files, configs, caches).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or other numeric breakdowns.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad invocation: unknown flags, unknown config keys, invalid ranges.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AgentDesign { Raw, Cot, Sc, ReactReflect, Mad, Summary };

inline constexpr int kAgentDesignCount = 6;

std::string_view design_name(AgentDesign design);
AgentDesign design_from_name(std::string_view name);

// ---- small string utilities shared across modules ----

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> whitespace_tokens(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);

/// FNV-1a over bytes, with a caller-supplied seed folded into the basis.
/// Stable across platforms (unlike std::hash).
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0);

/// Deterministic uniform double in [0, 1) from a 64-bit generator draw.
inline double uniform_unit(std::uint64_t raw) {
  return static_cast<double>(raw >> 11) * 0x1.0p-53;
}

// ---- line-delimited JSON helpers ----

/// Calls fn(line_number, raw_line) for every non-empty line; line numbers
/// start at 1. Throws DataError if the file cannot be opened.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(int, const std::string&)>& fn);

void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace agentrouter
