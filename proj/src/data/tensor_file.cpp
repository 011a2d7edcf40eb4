#include "data/tensor_file.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "core/errors.hpp"

namespace capsnet {

namespace {

constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <class T>
  T take() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(u);
  }

  std::string take_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      raise(ErrorKind::length, path_ + ": truncated at byte " + std::to_string(pos_) + " (needed " +
                                   std::to_string(n) + " more)");
  }
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& TensorContainer::get(const std::string& name) const {
  for (const auto& r : tensors)
    if (r.name == name) return r.tensor;
  raise(ErrorKind::format, "tensor '" + name + "' not found in container");
}

bool TensorContainer::has(const std::string& name) const {
  for (const auto& r : tensors)
    if (r.name == name) return true;
  return false;
}

void write_tensor_file(const std::filesystem::path& path, const char* magic, const std::string& header,
                       const std::vector<TensorRecord>& tensors) {
  std::string out(magic, 8);
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put_le(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& r : tensors) {
    put_le(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_le(out, static_cast<std::uint32_t>(r.tensor.dim()));
    for (std::size_t d : r.tensor.shape()) put_le(out, static_cast<std::uint64_t>(d));
    for (double v : r.tensor.values()) put_le(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::io, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) raise(ErrorKind::io, "write failed: " + path.string());
}

TensorContainer read_tensor_file(const std::filesystem::path& path, const char* magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorKind::io, "cannot open " + path.string());
  Reader in(std::string(std::istreambuf_iterator<char>(f), {}), path.string());
  std::string got = in.take_bytes(8);
  if (got != std::string(magic, 8))
    raise(ErrorKind::format, path.string() + ": bad magic '" + got + "', expected '" + std::string(magic, 8) + "'");
  auto version = in.take<std::uint32_t>();
  if (version != kVersion)
    raise(ErrorKind::format, path.string() + ": unsupported version " + std::to_string(version));
  TensorContainer c;
  c.header = in.take_bytes(in.take<std::uint32_t>());
  const auto count = in.take<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    r.name = in.take_bytes(in.take<std::uint32_t>());
    const auto ndim = in.take<std::uint32_t>();
    if (ndim == 0 || ndim > 16) raise(ErrorKind::format, path.string() + ": tensor '" + r.name + "' has rank " + std::to_string(ndim));
    Shape shape(ndim);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(in.take<std::uint64_t>());
      if (d == 0) raise(ErrorKind::format, path.string() + ": tensor '" + r.name + "' has a zero extent");
      if (d > in.remaining() || (n *= d) > in.remaining())
        raise(ErrorKind::length, path.string() + ": truncated in values of tensor '" + r.name + "'");
    }
    if (n > in.remaining() / 8)
      raise(ErrorKind::length, path.string() + ": truncated in values of tensor '" + r.name + "'");
    std::vector<double> v(n);
    for (auto& x : v) x = in.take<double>();
    r.tensor = Tensor(std::move(shape), std::move(v));
    c.tensors.push_back(std::move(r));
  }
  if (!in.at_end()) raise(ErrorKind::format, path.string() + ": trailing bytes after last tensor");
  return c;
}

}  // namespace capsnet
