#pragma once

#include <filesystem>

#include "tergan/tensor.hpp"

// Single images are [H, W, 3] float tensors with values in [0, 1].
namespace tergan::image {

/// Decodes an 8- or 16-bit PNG (gray, gray+alpha, RGB or RGBA) to RGB.
/// Throws IoError when the file cannot be read or decoded.
Tensor load_png(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG. Values are clamped to [0, 1] and rounded.
void save_png(const std::filesystem::path& path, const Tensor& image);

Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t height, std::size_t width);

/// Bilinear resampling for upscaling, box averaging for downscaling.
Tensor resize(const Tensor& image, std::size_t height, std::size_t width);

/// Rotation about the image centre, bilinear interpolation, edge replication.
/// Positive angles rotate counter-clockwise.
Tensor rotate(const Tensor& image, double degrees);

Tensor flip_horizontal(const Tensor& image);

/// Stacks equally sized [H,W,3] images into an [N,H,W,3] batch.
Tensor stack(const std::vector<const Tensor*>& images);

/// Row `index` of an [N,H,W,3] batch as an [H,W,3] image.
Tensor unstack(const Tensor& batch, std::size_t index);

double mean(const Tensor& image);

}  // namespace tergan::image
