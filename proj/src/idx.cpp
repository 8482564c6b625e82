#include <zlib.h>

#include <array>
#include <memory>

#include "adnl/datasets.hpp"

namespace adnl {
namespace {

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

GzHandle open_gz(const std::filesystem::path& path, const char* mode) {
  gzFile f = gzopen(path.c_str(), mode);
  if (!f) throw DatasetError("cannot open " + path.string());
  return GzHandle(f);
}

// Reads up to n bytes; returns the count actually read.
std::size_t read_some(gzFile f, std::uint8_t* out, std::size_t n, const std::filesystem::path& path) {
  std::size_t done = 0;
  while (done < n) {
    const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
    const int got = gzread(f, out + done, chunk);
    if (got < 0) throw DatasetError("read error in " + path.string());
    if (got == 0) break;
    done += static_cast<std::size_t>(got);
  }
  return done;
}

std::uint32_t big_endian32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

}  // namespace

IdxArray read_idx(const std::filesystem::path& path) {
  auto f = open_gz(path, "rb");
  std::array<std::uint8_t, 4> word{};
  if (read_some(f.get(), word.data(), 4, path) != 4) throw IdxTruncatedError(path.string() + ": missing IDX magic");
  IdxArray out;
  out.magic = big_endian32(word.data());
  if (word[0] != 0 || word[1] != 0 || word[2] != 0x08 || word[3] == 0) {
    throw IdxFormatError(path.string() + ": magic " + std::to_string(out.magic) +
                         " is not an unsigned-byte IDX header");
  }
  const int rank = word[3];
  std::size_t count = 1;
  for (int d = 0; d < rank; ++d) {
    if (read_some(f.get(), word.data(), 4, path) != 4) {
      throw IdxTruncatedError(path.string() + ": header ends before dimension " + std::to_string(d));
    }
    out.dims.push_back(big_endian32(word.data()));
    count *= out.dims.back();
  }
  out.payload.resize(count);
  const std::size_t got = read_some(f.get(), out.payload.data(), count, path);
  if (got != count) {
    throw IdxTruncatedError(path.string() + ": payload has " + std::to_string(got) + " bytes, header promises " +
                            std::to_string(count));
  }
  return out;
}

void write_idx(const std::filesystem::path& path, const IdxArray& array) {
  const bool gz = path.extension() == ".gz";
  auto f = open_gz(path, gz ? "wb" : "wbT");
  std::vector<std::uint8_t> header;
  auto put = [&header](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) header.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put(array.magic);
  for (std::uint32_t d : array.dims) put(d);
  if (gzwrite(f.get(), header.data(), static_cast<unsigned>(header.size())) != static_cast<int>(header.size()) ||
      (!array.payload.empty() && gzwrite(f.get(), array.payload.data(), static_cast<unsigned>(array.payload.size())) !=
                                     static_cast<int>(array.payload.size()))) {
    throw DatasetError("write error in " + path.string());
  }
}

std::vector<LabeledSample> load_mnist_idx(const std::filesystem::path& images_path,
                                          const std::filesystem::path& labels_path) {
  const IdxArray images = read_idx(images_path);
  if (images.magic != kIdxImagesMagic || images.dims.size() != 3) {
    throw IdxFormatError(images_path.string() + ": expected image magic 2051, got " + std::to_string(images.magic));
  }
  const IdxArray labels = read_idx(labels_path);
  if (labels.magic != kIdxLabelsMagic || labels.dims.size() != 1) {
    throw IdxFormatError(labels_path.string() + ": expected label magic 2049, got " + std::to_string(labels.magic));
  }
  const std::uint32_t n = images.dims[0];
  if (labels.dims[0] != n) {
    throw IdxCountMismatchError("image file holds " + std::to_string(n) + " records, label file " +
                                std::to_string(labels.dims[0]));
  }
  const int h = static_cast<int>(images.dims[1]), w = static_cast<int>(images.dims[2]);
  const std::size_t per = static_cast<std::size_t>(h) * w;
  std::vector<LabeledSample> out(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const int digit = labels.payload[i];
    if (digit > 9) throw IdxFormatError(labels_path.string() + ": label " + std::to_string(digit) + " out of range");
    LabeledSample& s = out[i];
    s.image.channels = 1;
    s.image.height = h;
    s.image.width = w;
    s.image.pixels.assign(images.payload.begin() + static_cast<std::ptrdiff_t>(i * per),
                          images.payload.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    s.source_id = i;
    s.class_tag = digit;
  }
  return out;
}

}  // namespace adnl
