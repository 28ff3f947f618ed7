#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace raceam {

/// Malformed or inconsistent input data (config files, track files, binary
/// formats). Distinct from usage errors so the CLI can map it to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::array<std::uint8_t, 32> sha256(const void* data, std::size_t len);

/// Writes `content` to `path` via a temp file in the same directory plus
/// rename, so a killed process never leaves a truncated file under the
/// final name.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// Parses `key = value` lines. '#' starts a comment; blank lines ignored.
std::map<std::string, std::string> parse_key_value(const std::string& text);

/// Shortest decimal form that round-trips the exact double.
std::string format_double(double v);

// Little-endian binary append/read helpers used by the table and
// checkpoint formats.
void append_u32(std::string& out, std::uint32_t v);
void append_u64(std::string& out, std::uint64_t v);
void append_f64(std::string& out, double v);
void append_bytes(std::string& out, const void* data, std::size_t len);

class BinReader {
 public:
  BinReader(const std::string& buf) : buf_(buf) {}
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void bytes(void* dst, std::size_t len);
  std::size_t remaining() const { return buf_.size() - pos_; }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace raceam
