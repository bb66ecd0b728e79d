#pragma once

// Little-endian primitives for the dataset and checkpoint containers.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string_view>

namespace divelab::binio {

void write_magic(std::ostream& out, std::string_view magic);
void write_u64(std::ostream& out, std::uint64_t v);
void write_i64(std::ostream& out, std::int64_t v);
void write_f64(std::ostream& out, double v);

/// Reads from a stream and remembers how many bytes were consumed, so that
/// every failure can be reported as a ParseError at a byte offset.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void expect_magic(std::string_view magic);
  std::uint64_t u64();
  std::int64_t i64();
  double f64();
  /// Throws ParseError when bytes remain after the payload.
  void expect_end();

  std::size_t offset() const noexcept { return offset_; }

 private:
  void read_exact(char* dst, std::size_t n);

  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace divelab::binio
