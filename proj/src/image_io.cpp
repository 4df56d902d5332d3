#include "mtu/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mtu::io {

namespace {

static_assert(std::endian::native == std::endian::little, "flow files assume a little-endian host");

constexpr std::array<char, 4> kFlowMagic{'M', 'T', 'F', 'L'};
constexpr std::uint32_t kFlowVersion = 1;

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

template <typename V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::filesystem::path& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) throw IoError("truncated flow file " + path.string());
  return v;
}

}  // namespace

ImagePlane read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  const std::int64_t h = image.height;
  const std::int64_t w = image.width;
  ImagePlane out(h, w, 3);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t c = 0; c < 3; ++c) out.at(c, y, x) = pixels[static_cast<std::size_t>((y * w + x) * 3 + c)] / 255.0f;
  return out;
}

void write_png(const ImagePlane& image, const std::filesystem::path& path) {
  if (image.channels != 3 && image.channels != 1) throw IoError("write_png: expected 1 or 3 channels");
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::int64_t c_count = image.channels;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(image.height * image.width * c_count));
  for (std::int64_t y = 0; y < image.height; ++y)
    for (std::int64_t x = 0; x < image.width; ++x)
      for (std::int64_t c = 0; c < c_count; ++c)
        pixels[static_cast<std::size_t>((y * image.width + x) * c_count + c)] = quantize(image.at(c, y, x));
  if (!png_image_write_to_file(&desc, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + desc.message);
  }
}

FlowField read_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open flow file " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kFlowMagic) throw IoError("not a flow file: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kFlowVersion) throw IoError("unsupported flow file version " + std::to_string(version) + " in " + path.string());
  const auto width = get<std::uint32_t>(in, path);
  const auto height = get<std::uint32_t>(in, path);
  const auto scale = get<std::uint32_t>(in, path);
  if (scale != 1 && scale != 4) throw IoError("bad scale tag in " + path.string());
  if (width == 0 || height == 0) throw IoError("empty flow field in " + path.string());
  FlowField flow(height, width, scale == 1 ? FlowScale::full : FlowScale::quarter);
  const auto bytes = static_cast<std::streamsize>(flow.dx.size() * sizeof(float));
  if (!in.read(reinterpret_cast<char*>(flow.dx.data()), bytes) || !in.read(reinterpret_cast<char*>(flow.dy.data()), bytes)) {
    throw IoError("truncated flow file " + path.string());
  }
  if (!flow.finite()) throw IoError("non-finite values in flow file " + path.string());
  return flow;
}

void write_flow(const FlowField& flow, const std::filesystem::path& path) {
  if (!flow.finite()) throw IoError("write_flow: non-finite values");
  std::string out(kFlowMagic.begin(), kFlowMagic.end());
  put(out, kFlowVersion);
  put(out, static_cast<std::uint32_t>(flow.width));
  put(out, static_cast<std::uint32_t>(flow.height));
  put(out, static_cast<std::uint32_t>(flow.scale));
  out.append(reinterpret_cast<const char*>(flow.dx.data()), flow.dx.size() * sizeof(float));
  out.append(reinterpret_cast<const char*>(flow.dy.data()), flow.dy.size() * sizeof(float));
  write_file_atomic(path, out);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace mtu::io
