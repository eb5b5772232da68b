#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "conrad/common.hpp"
#include "conrad/scene.hpp"

namespace conrad {

/// 8-bit PNG. Grayscale files load as 1 channel, everything else as 3
/// (alpha dropped). Values map to [0,1].
Image read_png(const std::filesystem::path& path);
/// Writes 1- or 3-channel images; values are clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);

/// Loads a PNG as a single-channel mask (first channel of color files).
Image read_mask(const std::filesystem::path& path);

/// Depth raw file: magic "CRDD", u32 width, u32 height, u32 reserved, then
/// width * height little-endian f32, row-major.
void write_depth_raw(const std::filesystem::path& path, const Image& depth);
Image read_depth_raw(const std::filesystem::path& path);

/// Feature file: magic "CRDF", u32 rows, u32 dim, u32 reserved, then
/// rows * dim little-endian f32.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;  // row-major
};
void write_features(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix read_features(const std::filesystem::path& path);

/// Pose file: one pose per line, "azimuth elevation radius" with angles in
/// degrees. Blank lines and lines starting with '#' are ignored.
std::vector<CameraPose> read_poses(const std::filesystem::path& path);
void write_poses(const std::filesystem::path& path, const std::vector<CameraPose>& poses);
std::vector<CameraPose> parse_poses(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// Little-endian helpers shared by the binary formats.
void append_u32(std::string& out, std::uint32_t v);
void append_u64(std::string& out, std::uint64_t v);
void append_f32(std::string& out, std::span<const float> values);
std::uint32_t load_u32(const std::string& bytes, std::size_t offset);
std::uint64_t load_u64(const std::string& bytes, std::size_t offset);
void load_f32(const std::string& bytes, std::size_t offset, std::span<float> out);

}  // namespace conrad
