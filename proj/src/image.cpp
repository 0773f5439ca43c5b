#include "tergan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>

namespace tergan::image {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void check_image(const Tensor& img, const char* what) {
  if (img.rank() != 3 || img.dim(2) != 3)
    throw ValidationError(std::string(what) + ": expected [H,W,3] image, got " + shape_string(img.shape()));
}

float at_clamped(const Tensor& img, long y, long x, std::size_t c) {
  const long h = img.dim(0), w = img.dim(1);
  y = std::clamp(y, 0L, h - 1);
  x = std::clamp(x, 0L, w - 1);
  return img[(y * w + x) * 3 + c];
}

float sample_bilinear(const Tensor& img, double y, double x, std::size_t c) {
  const double fy = std::floor(y), fx = std::floor(x);
  const double ay = y - fy, ax = x - fx;
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const double v00 = at_clamped(img, y0, x0, c), v01 = at_clamped(img, y0, x0 + 1, c);
  const double v10 = at_clamped(img, y0 + 1, x0, c), v11 = at_clamped(img, y0 + 1, x0 + 1, c);
  return static_cast<float>((1 - ay) * ((1 - ax) * v00 + ax * v01) + ay * ((1 - ax) * v10 + ax * v11));
}

// libpng reports errors through longjmp; nothing with a destructor may live
// between setjmp and the libpng calls below.
bool decode(std::FILE* fp, std::vector<png_byte>& pixels, png_uint_32& width, png_uint_32& height) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  std::vector<png_bytep>* rows = new std::vector<png_bytep>();
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    delete rows;
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * height);
  rows->resize(height);
  for (png_uint_32 y = 0; y < height; ++y) (*rows)[y] = pixels.data() + y * stride;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  delete rows;
  return stride == static_cast<std::size_t>(width) * 3;
}

}  // namespace

Tensor load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + path.string());
  std::rewind(fp.get());
  std::vector<png_byte> pixels;
  png_uint_32 width = 0, height = 0;
  if (!decode(fp.get(), pixels, width, height) || width == 0 || height == 0)
    throw IoError("cannot decode PNG " + path.string());
  Tensor img({height, width, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = pixels[i] / 255.0f;
  return img;
}

void save_png(const std::filesystem::path& path, const Tensor& image) {
  check_image(image, "save_png");
  const auto h = static_cast<png_uint_32>(image.dim(0)), w = static_cast<png_uint_32>(image.dim(1));
  std::vector<png_byte> pixels(image.size());
  for (std::size_t i = 0; i < image.size(); ++i)
    pixels[i] = static_cast<png_byte>(std::lround(std::clamp(image[i], 0.0f, 1.0f) * 255.0f));

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write image " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * w * 3;
  volatile bool ok = false;
  if (!setjmp(png_jmpbuf(png))) {
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    ok = true;
  }
  png_destroy_write_struct(&png, &info);
  if (!ok || std::fflush(fp.get()) != 0) throw IoError("failed writing " + path.string());
}

Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  check_image(image, "crop");
  if (top + height > image.dim(0) || left + width > image.dim(1))
    throw ValidationError("crop window exceeds image " + shape_string(image.shape()));
  Tensor out({height, width, 3});
  for (std::size_t y = 0; y < height; ++y)
    std::copy_n(image.ptr() + ((top + y) * image.dim(1) + left) * 3, width * 3, out.ptr() + y * width * 3);
  return out;
}

Tensor resize(const Tensor& image, std::size_t height, std::size_t width) {
  check_image(image, "resize");
  const std::size_t ih = image.dim(0), iw = image.dim(1);
  if (ih == height && iw == width) return image;
  Tensor out({height, width, 3});
  const double sy = static_cast<double>(ih) / height, sx = static_cast<double>(iw) / width;
  if (sy > 1.0 || sx > 1.0) {
    // Box filter: average the source area covered by each output pixel.
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double y0 = y * sy, y1 = (y + 1) * sy, x0 = x * sx, x1 = (x + 1) * sx;
        double acc[3] = {0, 0, 0}, area = 0;
        for (auto yy = static_cast<std::size_t>(y0); yy < std::min<double>(ih, std::ceil(y1)); ++yy) {
          const double wy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
          for (auto xx = static_cast<std::size_t>(x0); xx < std::min<double>(iw, std::ceil(x1)); ++xx) {
            const double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
            const double wgt = wy * wx;
            if (wgt <= 0) continue;
            for (std::size_t c = 0; c < 3; ++c) acc[c] += wgt * image[(yy * iw + xx) * 3 + c];
            area += wgt;
          }
        }
        for (std::size_t c = 0; c < 3; ++c) out[(y * width + x) * 3 + c] = static_cast<float>(acc[c] / area);
      }
    return out;
  }
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out[(y * width + x) * 3 + c] = sample_bilinear(image, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5, c);
  return out;
}

Tensor rotate(const Tensor& image, double degrees) {
  check_image(image, "rotate");
  const std::size_t h = image.dim(0), w = image.dim(1);
  const double a = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  Tensor out({h, w, 3});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse map: output pixel -> source location (y axis points down).
      const double dx = x - cx, dy = y - cy;
      const double sx = cx + ca * dx - sa * dy;
      const double sy = cy + sa * dx + ca * dy;
      for (std::size_t c = 0; c < 3; ++c) out[(y * w + x) * 3 + c] = sample_bilinear(image, sy, sx, c);
    }
  return out;
}

Tensor flip_horizontal(const Tensor& image) {
  check_image(image, "flip_horizontal");
  const std::size_t h = image.dim(0), w = image.dim(1);
  Tensor out({h, w, 3});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      std::copy_n(image.ptr() + (y * w + (w - 1 - x)) * 3, 3, out.ptr() + (y * w + x) * 3);
  return out;
}

Tensor stack(const std::vector<const Tensor*>& images) {
  if (images.empty()) throw ValidationError("cannot stack an empty image list");
  const Shape s = images.front()->shape();
  Tensor out({images.size(), s.at(0), s.at(1), s.at(2)});
  const std::size_t n = shape_size(s);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->shape() != s) throw ValidationError("cannot stack images of different sizes");
    std::copy_n(images[i]->ptr(), n, out.ptr() + i * n);
  }
  return out;
}

Tensor unstack(const Tensor& batch, std::size_t index) {
  if (batch.rank() != 4 || index >= batch.dim(0)) throw ValidationError("unstack: bad batch or index");
  Tensor out({batch.dim(1), batch.dim(2), batch.dim(3)});
  std::copy_n(batch.ptr() + index * out.size(), out.size(), out.ptr());
  return out;
}

double mean(const Tensor& image) {
  double s = 0;
  for (float v : image.data()) s += v;
  return image.empty() ? 0.0 : s / static_cast<double>(image.size());
}

}  // namespace tergan::image
