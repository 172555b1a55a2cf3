#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace parkloc {

/// Pixels per coarse feature cell. Preprocessed images tile exactly by it.
inline constexpr int kCoarseCell = 8;
/// Pixels per fine feature cell.
inline constexpr int kFineCell = 2;
inline constexpr int kMinImageSide = 32;
inline constexpr int kDefaultLongSide = 640;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row-major grayscale image with intensities in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;
  std::string source_id;

  float at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  float& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  bool empty() const { return pixels.empty(); }
};

/// Original dimensions of a decoded file, before preprocessing.
struct Resolution {
  int width = 0;
  int height = 0;

  bool operator==(const Resolution&) const = default;
};

struct LoadedImage {
  Image image;
  Resolution original;
  /// preprocessed_pixels = original_pixels * scale (both axes).
  double scale = 1.0;
};

/// BT.601 luma of an interleaved 8-bit RGB buffer, normalized to [0,1].
Image rgb_to_gray(std::span<const std::uint8_t> rgb, int width, int height);

/// Bilinear resample with pixel-center alignment (no antialiasing prefilter).
Image resize_bilinear(const Image& src, int new_width, int new_height);

/// Dimensions after scaling the long side to `target_long_side`, before
/// snapping to the coarse cell size.
Resolution scaled_size(Resolution original, int target_long_side);

/// Resize so the long side equals `target_long_side`, then crop right/bottom
/// so both sides are multiples of kCoarseCell. Throws InvalidInput when the
/// result is smaller than kMinImageSide on either side.
LoadedImage preprocess(const Image& gray, int target_long_side);

/// Decode PNG/JPEG from disk and preprocess. Throws DecodeError on failure.
LoadedImage load_image(const std::filesystem::path& path, int target_long_side,
                       std::string source_id = {});

/// Read only the stored dimensions of an image file.
Resolution probe_resolution(const std::filesystem::path& path);

/// Write an 8-bit grayscale PNG (values clamped to [0,1] then rounded).
void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace parkloc
