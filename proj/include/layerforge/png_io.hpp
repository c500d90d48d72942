#pragma once

#include <filesystem>
#include <utility>

#include "layerforge/image.hpp"

namespace layerforge {

enum class BitDepth { Eight = 8, Sixteen = 16 };

/// Reads gray, gray+alpha, RGB or RGBA PNG at 8 or 16 bits. Gray+alpha is widened to RGBA.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image,
               BitDepth depth = BitDepth::Eight);

/// Single-channel PNG, or channel 4 of an RGBA PNG.
AlphaMask read_alpha_png(const std::filesystem::path& path);
void write_alpha_png(const std::filesystem::path& path, const AlphaMask& alpha,
                     BitDepth depth = BitDepth::Eight);

/// Levels {0,128,255} <-> {0,0.5,1}. Any other stored level is rejected.
Trimap read_trimap_png(const std::filesystem::path& path);
void write_trimap_png(const std::filesystem::path& path, const Trimap& trimap);

std::pair<Image, AlphaMask> split_rgba(const Image& rgba);
Image merge_rgba(const Image& rgb, const AlphaMask& alpha);
Image alpha_as_image(const AlphaMask& alpha);
AlphaMask image_as_alpha(const Image& gray);

}  // namespace layerforge
