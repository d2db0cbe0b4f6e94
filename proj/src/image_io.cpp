/*
 * Copyright (c) 2026, the trapzbench authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "trapz/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "trapz/errors.hpp"

namespace trapz::raster {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngMessage {
    std::string text;
};

// Error handler: record the message, then longjmp back to the caller's
// setjmp point (the default libpng control flow). Exceptions must not cross
// libpng's C frames.
void record_and_longjmp(png_structp png, png_const_charp msg) {
    auto* out = static_cast<PngMessage*>(png_get_error_ptr(png));
    if (out && msg) out->text = msg;
    png_longjmp(png, 1);
}

void ignore_warning(png_structp, png_const_charp) {}

struct PngReadGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadGuard() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriteGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteGuard() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

}  // namespace

RasterImage read_image(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) {
        throw ImageIoError("cannot open image file: " + path.string());
    }

    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw ImageIoError("not a PNG file: " + path.string());
    }

    PngMessage message;
    PngReadGuard guard;
    guard.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, record_and_longjmp,
                                       ignore_warning);
    if (!guard.png) throw ImageIoError("libpng initialization failed");
    guard.info = png_create_info_struct(guard.png);
    if (!guard.info) throw ImageIoError("libpng initialization failed");

    std::vector<png_byte> rgba;
    std::vector<png_bytep> rows;

    if (setjmp(png_jmpbuf(guard.png))) {
        throw ImageIoError("libpng: " + message.text + " (" + path.string() + ")");
    }

    png_init_io(guard.png, file.get());
    png_set_sig_bytes(guard.png, 8);
    png_read_info(guard.png, guard.info);

    const png_uint_32 width = png_get_image_width(guard.png, guard.info);
    const png_uint_32 height = png_get_image_height(guard.png, guard.info);
    const int bit_depth = png_get_bit_depth(guard.png, guard.info);
    const int color_type = png_get_color_type(guard.png, guard.info);

    if (bit_depth == 16) {
        throw UnsupportedImageError("16-bit PNG is not supported: " + path.string());
    }
    if (width == 0 || height == 0 || width > 1u << 20 || height > 1u << 20) {
        throw ImageIoError("implausible PNG dimensions: " + path.string());
    }

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(guard.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(guard.png);
    if (png_get_valid(guard.png, guard.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(guard.png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(guard.png);
    // Read everything as RGBA and composite over white afterwards.
    png_set_add_alpha(guard.png, 0xFF, PNG_FILLER_AFTER);
    png_set_interlace_handling(guard.png);
    png_read_update_info(guard.png, guard.info);

    if (png_get_rowbytes(guard.png, guard.info) != static_cast<std::size_t>(width) * 4) {
        throw ImageIoError("unexpected PNG row layout: " + path.string());
    }

    rgba.resize(static_cast<std::size_t>(width) * height * 4);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) {
        rows[y] = rgba.data() + static_cast<std::size_t>(y) * width * 4;
    }
    png_read_image(guard.png, rows.data());
    png_read_end(guard.png, nullptr);

    RasterImage out(static_cast<int>(width), static_cast<int>(height));
    const png_byte* src = rgba.data();
    std::uint8_t* dst = out.data().data();
    const std::size_t n = static_cast<std::size_t>(width) * height;
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned a = src[3];
        if (a == 255) {
            dst[0] = src[0];
            dst[1] = src[1];
            dst[2] = src[2];
        } else {
            dst[0] = static_cast<std::uint8_t>((a * src[0] + (255 - a) * 255 + 127) / 255);
            dst[1] = static_cast<std::uint8_t>((a * src[1] + (255 - a) * 255 + 127) / 255);
            dst[2] = static_cast<std::uint8_t>((a * src[2] + (255 - a) * 255 + 127) / 255);
        }
        src += 4;
        dst += 3;
    }
    return out;
}

void write_image(const RasterImage& img, const std::filesystem::path& path,
                 int compression_level) {
    if (img.width() <= 0 || img.height() <= 0) {
        throw ImageIoError("refusing to write an empty image");
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) {
        throw ImageIoError("cannot open file for writing: " + path.string());
    }

    PngMessage message;
    PngWriteGuard guard;
    guard.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, record_and_longjmp,
                                        ignore_warning);
    if (!guard.png) throw ImageIoError("libpng initialization failed");
    guard.info = png_create_info_struct(guard.png);
    if (!guard.info) throw ImageIoError("libpng initialization failed");

    if (setjmp(png_jmpbuf(guard.png))) {
        throw ImageIoError("libpng: " + message.text + " (" + path.string() + ")");
    }

    png_init_io(guard.png, file.get());
    png_set_compression_level(guard.png, std::clamp(compression_level, 0, 9));
    png_set_IHDR(guard.png, guard.info, static_cast<png_uint_32>(img.width()),
                 static_cast<png_uint_32>(img.height()), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(guard.png, guard.info);
    for (int y = 0; y < img.height(); ++y) {
        png_write_row(guard.png, const_cast<png_bytep>(img.row(y)));
    }
    png_write_end(guard.png, nullptr);
}

}  // namespace trapz::raster
