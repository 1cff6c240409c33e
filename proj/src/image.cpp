#include "latentx/image.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "latentx/error.hpp"

namespace latentx {

Image::Image(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {
  if (w <= 0 || h <= 0 || (c != 1 && c != 3))
    throw Error(ErrorKind::Precondition, "image needs positive size and 1 or 3 channels");
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels)
    throw Error(ErrorKind::Precondition, "pixel buffer does not match image size");
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
    throw Error(ErrorKind::Io, std::string("png encode: ") + png.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw Error(ErrorKind::Io, std::string("png encode: ") + png.message);
  out.resize(size);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
    throw Error(ErrorKind::Io, std::string("png decode: ") + png.message);
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image image(static_cast<int>(png.width), static_cast<int>(png.height), color ? 3 : 1);
  if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw Error(ErrorKind::Io, std::string("png decode: ") + png.message);
  }
  return image;
}

void write_png(const std::string& path, const Image& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

Image compose_grid(const std::vector<std::vector<Image>>& rows, int gap_px) {
  if (rows.empty()) throw Error(ErrorKind::Precondition, "grid needs at least one row");
  if (gap_px < 0) throw Error(ErrorKind::Precondition, "gap must be non-negative");
  const Image* first = nullptr;
  std::size_t columns = 0;
  for (const auto& row : rows) {
    columns = std::max(columns, row.size());
    for (const auto& img : row) {
      if (!first) first = &img;
      if (img.width != first->width || img.height != first->height || img.channels != first->channels)
        throw Error(ErrorKind::RaggedRow, "grid images differ in size or channels");
    }
  }
  if (!first) throw Error(ErrorKind::Precondition, "grid has no images");

  const int cols = static_cast<int>(columns);
  const int nrows = static_cast<int>(rows.size());
  Image grid(cols * first->width + (cols - 1) * gap_px, nrows * first->height + (nrows - 1) * gap_px,
             first->channels, 255);
  const std::size_t row_bytes = static_cast<std::size_t>(first->width) * first->channels;
  for (int r = 0; r < nrows; ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const Image& img = rows[r][c];
      const int x0 = static_cast<int>(c) * (first->width + gap_px);
      const int y0 = r * (first->height + gap_px);
      for (int y = 0; y < img.height; ++y)
        std::memcpy(&grid.at(x0, y0 + y), img.pixels.data() + static_cast<std::size_t>(y) * row_bytes, row_bytes);
    }
  }
  return grid;
}

}  // namespace latentx
