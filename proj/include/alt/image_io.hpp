#pragma once

// 8-bit RGB PNG read/write for H x W x 3 tensors with intensities in [0,1].

#include <png.h>

#include <cstdio>
#include <string>
#include <vector>

#include "alt/tensor.hpp"
#include "alt/util.hpp"

namespace alt {

inline void write_png(const std::string& path, const Tensor<double>& img) {
    if (img.ndim() != 3 || img.dim(2) != 3) throw InputError("write_png: expects H x W x 3");
    int H = img.dim(0), W = img.dim(1);
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw InputError("write_png: cannot open '" + path + "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw InputError("write_png: libpng failure for '" + path + "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, W, H, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = img.at(y, x, c);
                v = v < 0 ? 0 : (v > 1 ? 1 : v);
                row[static_cast<size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline Tensor<double> read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw InputError("read_png: cannot open '" + path + "'");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw ParseError("read_png: libpng failure for '" + path + "'");
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_uint_32 W = png_get_image_width(png, info), H = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info), color = png_get_color_type(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    Tensor<double> img({static_cast<int>(H), static_cast<int>(W), 3});
    std::vector<png_byte> row(static_cast<size_t>(W) * 3);
    for (png_uint_32 y = 0; y < H; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

}  // namespace alt
