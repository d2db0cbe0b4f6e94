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

#pragma once

#include <filesystem>

#include "trapz/raster.hpp"

namespace trapz::raster {

/// Decodes a PNG file to 8-bit RGB. Palette and grayscale images are
/// expanded; an alpha channel is composited over white. 16-bit files are
/// rejected with UnsupportedImageError.
RasterImage read_image(const std::filesystem::path& path);

/// Encodes img as an 8-bit RGB PNG. compression_level follows zlib (0-9).
void write_image(const RasterImage& img, const std::filesystem::path& path,
                 int compression_level = 6);

}  // namespace trapz::raster
