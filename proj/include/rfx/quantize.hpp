#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rfx {

enum class QuantMode : std::uint8_t { kF32 = 0, kF16 = 1, kI8 = 2, kNF4 = 3 };

std::string_view quant_mode_name(QuantMode mode);
/// Accepts f32/fp32, f16/fp16, i8/int8, nf4 (any case). Throws ConfigError.
QuantMode parse_quant_mode(std::string_view text);
/// Storage bits per factor element, excluding scales.
unsigned quant_bits(QuantMode mode);

inline constexpr std::size_t kNf4BlockSize = 64;

// 4-bit normal-float levels (quantiles of N(0,1) rescaled to [-1, 1]).
inline constexpr std::array<double, 16> kNf4Codebook = {
    -1.0,
    -0.6961928009986877,
    -0.5250730514526367,
    -0.39491748809814453,
    -0.28444138169288635,
    -0.18477343022823334,
    -0.09105003625154495,
    0.0,
    0.07958029955625534,
    0.16093020141124725,
    0.24611230194568634,
    0.33791524171829224,
    0.44070982933044434,
    0.5626170039176941,
    0.7229568362236023,
    1.0,
};

/// Largest distance between adjacent codebook levels.
double nf4_max_gap();
/// Index of the nearest level to x in [-1, 1]; ties go to the lower level.
std::uint8_t nf4_encode(double x);

/// IEEE binary16, round to nearest even; overflow saturates to infinity.
std::uint16_t to_half(double value);
double from_half(std::uint16_t bits);

/// A rows x cols matrix quantized column-major. Scales are per column for
/// I8 and per 64-element block of the column-major flattening for NF4.
struct QuantizedMatrix {
  QuantMode mode = QuantMode::kF32;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> scales;
  std::vector<std::uint8_t> payload;

  /// Column-major doubles.
  std::vector<double> dequantize() const;
  std::size_t payload_bytes() const noexcept { return payload.size(); }
  bool operator==(const QuantizedMatrix&) const = default;
};

/// `values` is column-major rows x cols and must be finite.
QuantizedMatrix quantize(std::span<const double> values, std::size_t rows, std::size_t cols, QuantMode mode);

}  // namespace rfx
