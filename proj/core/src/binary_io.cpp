#include "binary_io.hpp"

#include <array>
#include <bit>
#include <istream>
#include <ostream>
#include <string>

#include "divelab/error.hpp"

namespace divelab::binio {

namespace {

void put_le(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes.data(), bytes.size());
}

}  // namespace

void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void write_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void write_i64(std::ostream& out, std::int64_t v) { put_le(out, static_cast<std::uint64_t>(v)); }
void write_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

void Reader::read_exact(char* dst, std::size_t n) {
  in_.read(dst, static_cast<std::streamsize>(n));
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got != n) {
    throw ParseError("unexpected end of file", offset_ + got);
  }
  offset_ += n;
}

void Reader::expect_magic(std::string_view magic) {
  std::string buf(magic.size(), '\0');
  const std::size_t at = offset_;
  read_exact(buf.data(), buf.size());
  if (buf != magic) throw ParseError("bad magic, expected \"" + std::string(magic) + "\"", at);
}

std::uint64_t Reader::u64() {
  std::array<unsigned char, 8> b{};
  read_exact(reinterpret_cast<char*>(b.data()), b.size());
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::int64_t Reader::i64() { return static_cast<std::int64_t>(u64()); }
double Reader::f64() { return std::bit_cast<double>(u64()); }

void Reader::expect_end() {
  if (in_.peek() != std::char_traits<char>::eof()) {
    throw ParseError("trailing bytes after payload", offset_);
  }
}

}  // namespace divelab::binio
