#include "data/idx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

#include "core/errors.hpp"

namespace capsnet {

namespace {

std::string read_all(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) raise(ErrorKind::io, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), {}};
}

std::uint32_t be32(const std::string& b, std::size_t off, const std::filesystem::path& p) {
  if (b.size() < off + 4) raise(ErrorKind::length, p.string() + ": truncated header");
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[off + i]);
  return v;
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::io, "cannot open " + p.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) raise(ErrorKind::io, "write failed: " + p.string());
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const std::string img = read_all(images_path);
  const std::string lab = read_all(labels_path);
  if (auto m = be32(img, 0, images_path); m != kIdxImageMagic)
    raise(ErrorKind::format, images_path.string() + ": bad IDX image magic " + hex(m) + ", expected " + hex(kIdxImageMagic));
  if (auto m = be32(lab, 0, labels_path); m != kIdxLabelMagic)
    raise(ErrorKind::format, labels_path.string() + ": bad IDX label magic " + hex(m) + ", expected " + hex(kIdxLabelMagic));
  const std::size_t n = be32(img, 4, images_path), rows = be32(img, 8, images_path), cols = be32(img, 12, images_path);
  const std::size_t n_labels = be32(lab, 4, labels_path);
  if (n == 0 || rows == 0 || cols == 0) raise(ErrorKind::format, images_path.string() + ": zero extent in header");
  if (n > img.size() || rows * cols > img.size() || img.size() < 16 + n * rows * cols)
    raise(ErrorKind::length, images_path.string() + ": truncated, header promises " + std::to_string(n) + " images of " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
  if (lab.size() < 8 + n_labels) raise(ErrorKind::length, labels_path.string() + ": truncated label data");
  if (n != n_labels)
    raise(ErrorKind::consistency, std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");

  std::vector<double> px(n * rows * cols);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<unsigned char>(img[16 + i]) / 255.0;
  Dataset d;
  d.images = Tensor({n, 1, rows, cols}, std::move(px));
  std::size_t max_label = 1;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels.push_back(static_cast<unsigned char>(lab[8 + i]));
    max_label = std::max(max_label, d.labels.back());
  }
  d.n_classes = max_label + 1;
  return d;
}

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path, const Dataset& d) {
  d.validate();
  if (d.channels() != 1) raise(ErrorKind::configuration, "IDX export supports single-channel images only");
  const std::size_t n = d.size(), rows = d.images.size(2), cols = d.images.size(3);
  std::string img, lab;
  put_be32(img, kIdxImageMagic);
  put_be32(img, static_cast<std::uint32_t>(n));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (double x : d.images.values())
    img.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0))));
  put_be32(lab, kIdxLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(n));
  for (std::size_t y : d.labels) {
    if (y > 255) raise(ErrorKind::configuration, "IDX labels must fit in a byte");
    lab.push_back(static_cast<char>(y));
  }
  write_file(images_path, img);
  write_file(labels_path, lab);
}

}  // namespace capsnet
