#include "wsr/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace wsr {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor<float> read_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open PNG for reading: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw IoError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng read init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng info init failed");
    }
    std::vector<std::vector<png_byte>> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("PNG decode error: " + path);
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_expand(png);  // palette and low-depth gray to 8-bit
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    const auto ctype = png_get_color_type(png, info);
    if (ctype == PNG_COLOR_TYPE_GRAY || ctype == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const std::int64_t h = png_get_image_height(png, info);
    const std::int64_t w = png_get_image_width(png, info);
    if (png_get_rowbytes(png, info) != std::size_t(3 * w)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unexpected PNG row layout: " + path);
    }
    rows.assign(h, std::vector<png_byte>(3 * w));
    std::vector<png_bytep> rowp(h);
    for (std::int64_t i = 0; i < h; ++i) rowp[i] = rows[i].data();
    png_read_image(png, rowp.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor<float> img(Shape{1, 3, h, w});
    for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j)
            for (std::int64_t c = 0; c < 3; ++c)
                img[(c * h + i) * w + j] = float(rows[i][3 * j + c]) / 255.0f;
    return img;
}

void write_png(const std::string& path, const Tensor<float>& image) {
    Shape sh = image.shape();
    if (sh.size() == 4 && sh[0] == 1) sh.erase(sh.begin());
    if (sh.size() != 3 || sh[0] != 3)
        throw DimensionError("write_png: expected [1,3,h,w] or [3,h,w], got " +
                             shape_str(image.shape()));
    const std::int64_t h = sh[1], w = sh[2];

    std::vector<png_byte> bytes(std::size_t(h) * std::size_t(w) * 3);
    const float* p = image.data();
    for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j)
            for (std::int64_t c = 0; c < 3; ++c) {
                const double v = std::min(1.0, std::max(0.0, double(p[(c * h + i) * w + j])));
                bytes[std::size_t((i * w + j) * 3 + c)] = png_byte(std::floor(v * 255.0 + 0.5));
            }

    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open PNG for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng write init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encode error: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::int64_t i = 0; i < h; ++i)
        png_write_row(png, bytes.data() + std::size_t(i) * std::size_t(w) * 3);
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

}  // namespace wsr
