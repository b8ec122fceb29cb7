#include "rfx/quantize.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <limits>

#include "rfx/error.hpp"

namespace rfx {
namespace {

double absmax(std::span<const double> values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

void put_float(std::vector<std::uint8_t>& out, float f) {
  std::uint8_t bytes[4];
  std::memcpy(bytes, &f, 4);
  out.insert(out.end(), bytes, bytes + 4);
}

float get_float(const std::uint8_t* p) {
  float f;
  std::memcpy(&f, p, 4);
  return f;
}

}  // namespace

std::string_view quant_mode_name(QuantMode mode) {
  switch (mode) {
    case QuantMode::kF32: return "f32";
    case QuantMode::kF16: return "f16";
    case QuantMode::kI8: return "int8";
    case QuantMode::kNF4: return "nf4";
  }
  return "?";
}

QuantMode parse_quant_mode(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "f32" || s == "fp32" || s == "float32") return QuantMode::kF32;
  if (s == "f16" || s == "fp16" || s == "float16") return QuantMode::kF16;
  if (s == "i8" || s == "int8") return QuantMode::kI8;
  if (s == "nf4") return QuantMode::kNF4;
  throw ConfigError("unknown quantization mode '" + std::string(text) + "' (expected f32, f16, int8 or nf4)");
}

unsigned quant_bits(QuantMode mode) {
  switch (mode) {
    case QuantMode::kF32: return 32;
    case QuantMode::kF16: return 16;
    case QuantMode::kI8: return 8;
    case QuantMode::kNF4: return 4;
  }
  return 0;
}

double nf4_max_gap() {
  double gap = 0.0;
  for (std::size_t k = 1; k < kNf4Codebook.size(); ++k) gap = std::max(gap, kNf4Codebook[k] - kNf4Codebook[k - 1]);
  return gap;
}

std::uint8_t nf4_encode(double x) {
  // Levels are sorted; find the first level >= x and compare with its neighbour.
  const auto it = std::lower_bound(kNf4Codebook.begin(), kNf4Codebook.end(), x);
  if (it == kNf4Codebook.begin()) return 0;
  if (it == kNf4Codebook.end()) return 15;
  const auto hi = static_cast<std::uint8_t>(it - kNf4Codebook.begin());
  return (*it - x) < (x - *(it - 1)) ? hi : static_cast<std::uint8_t>(hi - 1);
}

std::uint16_t to_half(double value) {
  std::uint16_t sign = std::signbit(value) ? 0x8000 : 0;
  double a = std::abs(value);
  if (std::isnan(a)) return 0x7e00;
  if (std::isinf(a)) return sign | 0x7c00;
  if (a == 0.0) return sign;

  int e;
  std::frexp(a, &e);  // a = f * 2^e, f in [0.5, 1)
  const int exponent = e - 1;
  // Spacing of representable halves around a: subnormals share 2^-24.
  const int quantum_exp = std::max(exponent, -14) - 10;
  const double rounded = std::ldexp(std::nearbyint(std::ldexp(a, -quantum_exp)), quantum_exp);
  if (rounded >= 65536.0 - 16.0) return sign | 0x7c00;
  if (rounded < std::ldexp(1.0, -14)) {
    return sign | static_cast<std::uint16_t>(std::ldexp(rounded, 24));
  }
  std::frexp(rounded, &e);
  const int re = e - 1;
  const auto mantissa = static_cast<std::uint16_t>(std::ldexp(rounded, 10 - re) - 1024.0);
  return sign | static_cast<std::uint16_t>((re + 15) << 10) | mantissa;
}

double from_half(std::uint16_t bits) {
  const double sign = (bits & 0x8000) ? -1.0 : 1.0;
  const int exponent = (bits >> 10) & 0x1f;
  const int mantissa = bits & 0x3ff;
  if (exponent == 0) return sign * std::ldexp(mantissa, -24);
  if (exponent == 31) return mantissa ? std::numeric_limits<double>::quiet_NaN() : sign * HUGE_VAL;
  return sign * std::ldexp(1024 + mantissa, exponent - 25);
}

QuantizedMatrix quantize(std::span<const double> values, std::size_t rows, std::size_t cols, QuantMode mode) {
  if (values.size() != rows * cols) throw std::invalid_argument("quantize: size does not match rows x cols");
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("quantize: non-finite input");
  }
  QuantizedMatrix q;
  q.mode = mode;
  q.rows = rows;
  q.cols = cols;
  const std::size_t count = values.size();

  switch (mode) {
    case QuantMode::kF32:
      q.payload.reserve(count * 4);
      for (double v : values) put_float(q.payload, static_cast<float>(v));
      break;
    case QuantMode::kF16:
      q.payload.reserve(count * 2);
      for (double v : values) {
        const auto h = to_half(v);
        q.payload.push_back(static_cast<std::uint8_t>(h & 0xff));
        q.payload.push_back(static_cast<std::uint8_t>(h >> 8));
      }
      break;
    case QuantMode::kI8:
      q.payload.resize(count);
      q.scales.resize(cols);
      for (std::size_t c = 0; c < cols; ++c) {
        const auto column = values.subspan(c * rows, rows);
        const double scale = absmax(column) / 127.0;
        q.scales[c] = scale;
        for (std::size_t r = 0; r < rows; ++r) {
          const double code = scale == 0.0 ? 0.0 : std::clamp(std::nearbyint(column[r] / scale), -127.0, 127.0);
          q.payload[c * rows + r] = static_cast<std::uint8_t>(static_cast<std::int8_t>(code));
        }
      }
      break;
    case QuantMode::kNF4: {
      const std::size_t blocks = (count + kNf4BlockSize - 1) / kNf4BlockSize;
      q.scales.resize(blocks);
      q.payload.assign((count + 1) / 2, 0);
      for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t begin = b * kNf4BlockSize;
        const auto block = values.subspan(begin, std::min(kNf4BlockSize, count - begin));
        const double scale = absmax(block);
        q.scales[b] = scale;
        for (std::size_t k = 0; k < block.size(); ++k) {
          // Zero blocks map to the exact-zero level.
          const std::uint8_t code = scale == 0.0 ? 7 : nf4_encode(block[k] / scale);
          const std::size_t idx = begin + k;
          q.payload[idx / 2] |= static_cast<std::uint8_t>(idx % 2 == 0 ? code : code << 4);
        }
      }
      break;
    }
  }
  return q;
}

std::vector<double> QuantizedMatrix::dequantize() const {
  const std::size_t count = rows * cols;
  std::vector<double> out(count);
  switch (mode) {
    case QuantMode::kF32:
      for (std::size_t k = 0; k < count; ++k) out[k] = get_float(payload.data() + 4 * k);
      break;
    case QuantMode::kF16:
      for (std::size_t k = 0; k < count; ++k) {
        out[k] = from_half(static_cast<std::uint16_t>(payload[2 * k] | (payload[2 * k + 1] << 8)));
      }
      break;
    case QuantMode::kI8:
      for (std::size_t k = 0; k < count; ++k) {
        out[k] = static_cast<std::int8_t>(payload[k]) * scales[k / rows];
      }
      break;
    case QuantMode::kNF4:
      for (std::size_t k = 0; k < count; ++k) {
        const std::uint8_t code = k % 2 == 0 ? payload[k / 2] & 0x0f : payload[k / 2] >> 4;
        out[k] = kNf4Codebook[code] * scales[k / kNf4BlockSize];
      }
      break;
  }
  return out;
}

}  // namespace rfx
