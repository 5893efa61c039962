#include "dfseg/image.hpp"

#include "dfseg/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace dfseg {
namespace {

std::string lower_ext(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

RawImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw LoadError("cannot read PNG " + path.string() + ": " + img.message);
  }
  const bool sixteen = (img.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  img.format = sixteen ? PNG_FORMAT_LINEAR_Y : PNG_FORMAT_GRAY;
  RawImage out;
  out.bit_depth = sixteen ? 16 : 8;
  out.pixels.resize(img.height, img.width);
  if (sixteen) {
    std::vector<png_uint_16> buf(PNG_IMAGE_SIZE(img) / 2);
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
      throw LoadError("cannot decode PNG " + path.string() + ": " + img.message);
    }
    for (Index i = 0; i < out.pixels.size(); ++i) out.pixels.data()[i] = buf[static_cast<std::size_t>(i)];
  } else {
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
      throw LoadError("cannot decode PNG " + path.string() + ": " + img.message);
    }
    for (Index i = 0; i < out.pixels.size(); ++i) out.pixels.data()[i] = buf[static_cast<std::size_t>(i)];
  }
  return out;
}

// Skips whitespace and '#' comments in a PNM header.
int read_pnm_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int v = 0;
  if (!(in >> v)) throw LoadError("malformed PGM header: " + path.string());
  return v;
}

RawImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5" && magic != "P2") throw LoadError("not a PGM file: " + path.string());
  const int width = read_pnm_int(in, path);
  const int height = read_pnm_int(in, path);
  const int maxval = read_pnm_int(in, path);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw LoadError("unsupported PGM geometry: " + path.string());
  }
  RawImage out;
  out.bit_depth = maxval > 255 ? 16 : 8;
  out.pixels.resize(height, width);
  const Index count = Index(width) * height;
  if (magic == "P2") {
    for (Index i = 0; i < count; ++i) out.pixels.data()[i] = static_cast<float>(read_pnm_int(in, path));
    return out;
  }
  in.get();  // single whitespace after maxval
  if (maxval > 255) {
    std::vector<unsigned char> buf(static_cast<std::size_t>(count * 2));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw LoadError("truncated PGM: " + path.string());
    for (Index i = 0; i < count; ++i) {
      out.pixels.data()[i] = static_cast<float>((buf[2 * i] << 8) | buf[2 * i + 1]);
    }
  } else {
    std::vector<unsigned char> buf(static_cast<std::size_t>(count));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw LoadError("truncated PGM: " + path.string());
    for (Index i = 0; i < count; ++i) out.pixels.data()[i] = buf[static_cast<std::size_t>(i)];
  }
  return out;
}

void write_png_buffer(const std::filesystem::path& path, png_uint_32 format, Index rows,
                      Index cols, const void* buffer) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(cols);
  img.height = static_cast<png_uint_32>(rows);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer, 0, nullptr)) {
    throw LoadError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

}  // namespace

RawImage read_grayscale(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("image file not found: " + path.string());
  const auto ext = lower_ext(path);
  if (ext == ".pgm" || ext == ".pnm") return read_pgm(path);
  return read_png(path);
}

Mask read_mask(const std::filesystem::path& path) {
  const RawImage raw = read_grayscale(path);
  const float half = raw.bit_depth == 16 ? 32767.5f : 127.5f;
  return (raw.pixels > half).cast<std::uint8_t>();
}

void write_png(const std::filesystem::path& path, const Image& unit_image, int bit_depth) {
  const Index n = unit_image.size();
  if (bit_depth == 16) {
    std::vector<png_uint_16> buf(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const float v = std::clamp(unit_image.data()[i], 0.0f, 1.0f);
      buf[static_cast<std::size_t>(i)] = static_cast<png_uint_16>(std::lround(v * 65535.0f));
    }
    write_png_buffer(path, PNG_FORMAT_LINEAR_Y, unit_image.rows(), unit_image.cols(), buf.data());
  } else {
    std::vector<png_byte> buf(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const float v = std::clamp(unit_image.data()[i], 0.0f, 1.0f);
      buf[static_cast<std::size_t>(i)] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
    write_png_buffer(path, PNG_FORMAT_GRAY, unit_image.rows(), unit_image.cols(), buf.data());
  }
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<png_byte> buf(static_cast<std::size_t>(mask.size()));
  for (Index i = 0; i < mask.size(); ++i) buf[static_cast<std::size_t>(i)] = mask.data()[i] ? 255 : 0;
  write_png_buffer(path, PNG_FORMAT_GRAY, mask.rows(), mask.cols(), buf.data());
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_png_buffer(path, PNG_FORMAT_RGB, image.rows, image.cols, image.pixels.data());
}

void write_pgm(const std::filesystem::path& path, const Image& raw, int maxval) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << "P5\n" << raw.cols() << " " << raw.rows() << "\n" << maxval << "\n";
  for (Index i = 0; i < raw.size(); ++i) {
    const long v = std::clamp<long>(std::lround(raw.data()[i]), 0, maxval);
    if (maxval > 255) {
      out.put(static_cast<char>((v >> 8) & 0xff));
      out.put(static_cast<char>(v & 0xff));
    } else {
      out.put(static_cast<char>(v));
    }
  }
}

}  // namespace dfseg
