#include "parkloc/image.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>

namespace parkloc {
namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

// Converts a decoded OpenCV matrix (BGR channel order) to normalized gray.
Image mat_to_gray(const cv::Mat& mat) {
  double max_value = 0.0;
  switch (mat.depth()) {
    case CV_8U: max_value = 255.0; break;
    case CV_16U: max_value = 65535.0; break;
    default: throw DecodeError("unsupported sample depth");
  }
  const int channels = mat.channels();
  if (channels != 1 && channels != 3 && channels != 4) {
    throw DecodeError(fmt::format("unsupported channel count {}", channels));
  }

  Image out;
  out.width = mat.cols;
  out.height = mat.rows;
  out.pixels.resize(static_cast<size_t>(out.width) * out.height);

  auto sample = [&](int y, int x, int c) -> double {
    if (mat.depth() == CV_8U) return mat.ptr<std::uint8_t>(y)[x * channels + c];
    return mat.ptr<std::uint16_t>(y)[x * channels + c];
  };

  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double v;
      if (channels == 1) {
        v = sample(y, x, 0);
      } else {
        v = kLumaB * sample(y, x, 0) + kLumaG * sample(y, x, 1) + kLumaR * sample(y, x, 2);
      }
      out.at(x, y) = static_cast<float>(std::clamp(v / max_value, 0.0, 1.0));
    }
  }
  return out;
}

cv::Mat read_mat(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw DecodeError(fmt::format("cannot read image '{}'", path.string()));
  }
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) {
    throw DecodeError(fmt::format("cannot decode image '{}'", path.string()));
  }
  return mat;
}

}  // namespace

Image rgb_to_gray(std::span<const std::uint8_t> rgb, int width, int height) {
  if (width <= 0 || height <= 0 || rgb.size() != static_cast<size_t>(width) * height * 3) {
    throw InvalidInput("rgb buffer size does not match dimensions");
  }
  Image out;
  out.width = width;
  out.height = height;
  out.pixels.resize(static_cast<size_t>(width) * height);
  for (size_t i = 0; i < out.pixels.size(); ++i) {
    const double v = kLumaR * rgb[3 * i] + kLumaG * rgb[3 * i + 1] + kLumaB * rgb[3 * i + 2];
    out.pixels[i] = static_cast<float>(std::clamp(v / 255.0, 0.0, 1.0));
  }
  return out;
}

Image resize_bilinear(const Image& src, int new_width, int new_height) {
  if (src.empty() || new_width <= 0 || new_height <= 0) {
    throw InvalidInput("resize of empty image or to empty size");
  }
  Image dst;
  dst.width = new_width;
  dst.height = new_height;
  dst.source_id = src.source_id;
  dst.pixels.resize(static_cast<size_t>(new_width) * new_height);

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int dst_n, int src_n) {
    std::vector<Tap> t(dst_n);
    const double ratio = static_cast<double>(src_n) / dst_n;
    for (int i = 0; i < dst_n; ++i) {
      double s = (i + 0.5) * ratio - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
      const int i0 = static_cast<int>(std::floor(s));
      t[i] = {i0, std::min(i0 + 1, src_n - 1), s - i0};
    }
    return t;
  };
  const auto tx = taps(new_width, src.width);
  const auto ty = taps(new_height, src.height);

  for (int y = 0; y < new_height; ++y) {
    const auto [y0, y1, fy] = ty[y];
    for (int x = 0; x < new_width; ++x) {
      const auto [x0, x1, fx] = tx[x];
      const double top = (1.0 - fx) * src.at(x0, y0) + fx * src.at(x1, y0);
      const double bottom = (1.0 - fx) * src.at(x0, y1) + fx * src.at(x1, y1);
      dst.at(x, y) = static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  return dst;
}

Resolution scaled_size(Resolution original, int target_long_side) {
  if (original.width <= 0 || original.height <= 0 || target_long_side <= 0) {
    throw InvalidInput("non-positive image or target size");
  }
  const bool landscape = original.width >= original.height;
  const double long_side = landscape ? original.width : original.height;
  const double short_side = landscape ? original.height : original.width;
  const int scaled_short =
      std::max(1, static_cast<int>(std::lround(short_side * target_long_side / long_side)));
  return landscape ? Resolution{target_long_side, scaled_short}
                   : Resolution{scaled_short, target_long_side};
}

LoadedImage preprocess(const Image& gray, int target_long_side) {
  const Resolution original{gray.width, gray.height};
  const Resolution scaled = scaled_size(original, target_long_side);
  const int snapped_w = scaled.width / kCoarseCell * kCoarseCell;
  const int snapped_h = scaled.height / kCoarseCell * kCoarseCell;
  if (snapped_w < kMinImageSide || snapped_h < kMinImageSide) {
    throw InvalidInput(fmt::format("image '{}' is {}x{} after preprocessing, need at least {} px per side",
                                   gray.source_id, snapped_w, snapped_h, kMinImageSide));
  }

  LoadedImage out;
  out.original = original;
  out.scale = static_cast<double>(target_long_side) / std::max(original.width, original.height);

  const Image resized = scaled == original ? gray : resize_bilinear(gray, scaled.width, scaled.height);
  out.image.width = snapped_w;
  out.image.height = snapped_h;
  out.image.source_id = gray.source_id;
  out.image.pixels.resize(static_cast<size_t>(snapped_w) * snapped_h);
  for (int y = 0; y < snapped_h; ++y) {
    std::copy_n(resized.pixels.begin() + static_cast<ptrdiff_t>(y) * resized.width, snapped_w,
                out.image.pixels.begin() + static_cast<ptrdiff_t>(y) * snapped_w);
  }
  return out;
}

LoadedImage load_image(const std::filesystem::path& path, int target_long_side, std::string source_id) {
  Image gray = mat_to_gray(read_mat(path));
  gray.source_id = source_id.empty() ? path.stem().string() : std::move(source_id);
  return preprocess(gray, target_long_side);
}

Resolution probe_resolution(const std::filesystem::path& path) {
  const cv::Mat mat = read_mat(path);
  return {mat.cols, mat.rows};
}

void write_png(const Image& image, const std::filesystem::path& path) {
  cv::Mat mat(image.height, image.width, CV_8UC1);
  for (int y = 0; y < image.height; ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      const double v = std::clamp(static_cast<double>(image.at(x, y)), 0.0, 1.0);
      row[x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  if (!cv::imwrite(path.string(), mat)) {
    throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  }
}

}  // namespace parkloc
