#ifndef CHURNSTACK_COMMON_HPP
#define CHURNSTACK_COMMON_HPP

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace churnstack {

/// Binary churn label. Churners are the positive class everywhere.
enum class Label : std::uint8_t { churner = 0, non_churner = 1 };

inline constexpr std::size_t kNumClasses = 2;

inline constexpr std::size_t class_index(Label l) noexcept {
  return static_cast<std::size_t>(l);
}

inline constexpr std::array<Label, 2> kAllLabels{Label::churner,
                                                 Label::non_churner};

inline std::string_view label_name(Label l) noexcept {
  return l == Label::churner ? "churner" : "nonchurner";
}

/// Every error raised by the library. The message names the failing input.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest text that round-trips: 17 significant digits, "general" form.
inline std::string format_double17(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::general, 17);
  if (ec != std::errc{}) throw Error("cannot format floating value");
  return std::string(buf.data(), ptr);
}

/// Fixed notation with the given number of decimals (report tables).
inline std::string format_fixed(double v, int decimals) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::fixed, decimals);
  if (ec != std::errc{}) throw Error("cannot format floating value");
  return std::string(buf.data(), ptr);
}

inline std::string_view trim(std::string_view s) noexcept {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

/// Parses the whole of `s` as a decimal number; false on any trailing text.
inline bool parse_double(std::string_view s, double& out) noexcept {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

inline double parse_double_or_throw(std::string_view s, std::string_view what) {
  double v = 0.0;
  if (!parse_double(s, v))
    throw Error("malformed number '" + std::string(s) + "' in " +
                std::string(what));
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

/// Row-major n x d matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::vector<double> row(std::size_t r) const {
    return {data.begin() + static_cast<std::ptrdiff_t>(r * cols),
            data.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)};
  }
  bool operator==(const Matrix&) const = default;
};

}  // namespace churnstack

#endif  // CHURNSTACK_COMMON_HPP
