#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "replaylab/core/experience.hpp"

namespace replaylab {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct LabeledImage {
  Vector pixels;  // row-major, scaled to [0,1]
  std::size_t label = 0;
};

struct ImageDataset {
  std::size_t rows = 28;
  std::size_t cols = 28;
  std::vector<LabeledImage> examples;

  std::size_t size() const { return examples.size(); }
  std::size_t image_size() const { return rows * cols; }
};

namespace detail {

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = (std::uint32_t{bytes_[pos_]} << 24) | (std::uint32_t{bytes_[pos_ + 1]} << 16) |
                            (std::uint32_t{bytes_[pos_ + 2]} << 8) | std::uint32_t{bytes_[pos_ + 3]};
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error("unexpected end of data");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

inline std::vector<std::size_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  if (bytes.size() < 4 || in.u32() != kIdxLabelsMagic) throw Error("not an IDX file");
  const std::uint32_t count = in.u32();
  const auto payload = in.take(count);
  return {payload.begin(), payload.end()};
}

struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Vector> images;
};

inline IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  if (bytes.size() < 4 || in.u32() != kIdxImagesMagic) throw Error("not an IDX file");
  const std::uint32_t count = in.u32();
  IdxImages out;
  out.rows = in.u32();
  out.cols = in.u32();
  const std::size_t n = out.rows * out.cols;
  out.images.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto px = in.take(n);
    Vector img(n);
    for (std::size_t k = 0; k < n; ++k) img[k] = static_cast<double>(px[k]) / 255.0;
    out.images.push_back(std::move(img));
  }
  return out;
}

/// Reads an IDX image file (magic 0x803) and its label file (magic 0x801).
inline ImageDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = parse_idx_images(detail::read_file(images_path));
  const auto labels = parse_idx_labels(detail::read_file(labels_path));
  if (images.images.size() != labels.size())
    throw Error("image count " + std::to_string(images.images.size()) + " does not match label count " +
                std::to_string(labels.size()));
  ImageDataset ds{images.rows, images.cols, {}};
  ds.examples.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) ds.examples.push_back({images.images[i], labels[i]});
  return ds;
}

inline std::uint8_t pixel_byte(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw Error("pixel value outside [0,1]");
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

inline std::vector<std::uint8_t> encode_idx_images(const ImageDataset& ds) {
  std::vector<std::uint8_t> out;
  detail::put_u32(out, kIdxImagesMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(ds.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(ds.rows));
  detail::put_u32(out, static_cast<std::uint32_t>(ds.cols));
  for (const auto& ex : ds.examples) {
    if (ex.pixels.size() != ds.image_size()) throw Error("image size does not match dataset dimensions");
    for (const double v : ex.pixels) out.push_back(pixel_byte(v));
  }
  return out;
}

inline std::vector<std::uint8_t> encode_idx_labels(const ImageDataset& ds) {
  std::vector<std::uint8_t> out;
  detail::put_u32(out, kIdxLabelsMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(ds.size()));
  for (const auto& ex : ds.examples) {
    if (ex.label > 255) throw Error("label does not fit in one byte");
    out.push_back(static_cast<std::uint8_t>(ex.label));
  }
  return out;
}

inline void write_idx(const ImageDataset& ds, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  const auto write = [](const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  };
  write(images_path, encode_idx_images(ds));
  write(labels_path, encode_idx_labels(ds));
}

}  // namespace replaylab
