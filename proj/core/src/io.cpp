#include "conrad/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <png.h>

namespace conrad {

namespace {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xff));
    return out;
  }
  return v;
}

void check_header(const std::string& bytes, const char* magic, const std::filesystem::path& path) {
  if (bytes.size() < 16) {
    throw FormatError(FormatError::Kind::kTruncated, path.string() + ": file shorter than its 16-byte header");
  }
  if (bytes.compare(0, 4, magic) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, path.string() + ": expected magic " + magic);
  }
}

}  // namespace

void append_u32(std::string& out, std::uint32_t v) {
  v = to_little(v);
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void append_u64(std::string& out, std::uint64_t v) {
  v = to_little(v);
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void append_f32(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + 4 * values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(out.data() + start + 4 * i, &bits, 4);
  }
}

std::uint32_t load_u32(const std::string& bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) throw FormatError(FormatError::Kind::kTruncated, "unexpected end of data");
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + offset, 4);
  return to_little(v);
}

std::uint64_t load_u64(const std::string& bytes, std::size_t offset) {
  if (offset + 8 > bytes.size()) throw FormatError(FormatError::Kind::kTruncated, "unexpected end of data");
  std::uint64_t v;
  std::memcpy(&v, bytes.data() + offset, 8);
  return to_little(v);
}

void load_f32(const std::string& bytes, std::size_t offset, std::span<float> out) {
  if (offset + 4 * out.size() > bytes.size()) {
    throw FormatError(FormatError::Kind::kTruncated, "unexpected end of data");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + offset + 4 * i, 4);
    out[i] = std::bit_cast<float>(to_little(bits));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + png.message);
  }
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  Image img(static_cast<int>(png.height), static_cast<int>(png.width), gray ? 1 : 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = buffer[i] / 255.0f;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw InvalidArgument("PNG output needs 1 or 3 channels");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<png_byte> buffer(image.data.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const float v = std::isfinite(image.data[i]) ? std::clamp(image.data[i], 0.0f, 1.0f) : 0.0f;
    buffer[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

Image read_mask(const std::filesystem::path& path) {
  Image img = read_png(path);
  if (img.channels == 1) return img;
  Image mask(img.height, img.width, 1);
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) mask.at(i, j) = img.at(i, j, 0);
  }
  return mask;
}

void write_depth_raw(const std::filesystem::path& path, const Image& depth) {
  if (depth.channels != 1) throw InvalidArgument("depth maps have one channel");
  std::string bytes = "CRDD";
  append_u32(bytes, static_cast<std::uint32_t>(depth.width));
  append_u32(bytes, static_cast<std::uint32_t>(depth.height));
  append_u32(bytes, 0);
  append_f32(bytes, depth.data);
  write_file(path, bytes);
}

Image read_depth_raw(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  check_header(bytes, "CRDD", path);
  const std::uint32_t w = load_u32(bytes, 4);
  const std::uint32_t h = load_u32(bytes, 8);
  if (w == 0 || h == 0) throw FormatError(FormatError::Kind::kMalformed, path.string() + ": empty depth map");
  if (bytes.size() != 16 + 4ull * w * h) {
    throw FormatError(FormatError::Kind::kTruncated, path.string() + ": payload size does not match header");
  }
  Image depth(static_cast<int>(h), static_cast<int>(w), 1);
  load_f32(bytes, 16, depth.data);
  return depth;
}

void write_features(const std::filesystem::path& path, const FeatureMatrix& f) {
  if (f.data.size() != f.rows * f.dim) throw InvalidArgument("feature matrix size mismatch");
  std::string bytes = "CRDF";
  append_u32(bytes, static_cast<std::uint32_t>(f.rows));
  append_u32(bytes, static_cast<std::uint32_t>(f.dim));
  append_u32(bytes, 0);
  append_f32(bytes, f.data);
  write_file(path, bytes);
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  check_header(bytes, "CRDF", path);
  FeatureMatrix f;
  f.rows = load_u32(bytes, 4);
  f.dim = load_u32(bytes, 8);
  if (f.rows == 0 || f.dim == 0) throw FormatError(FormatError::Kind::kMalformed, path.string() + ": empty features");
  if (bytes.size() != 16 + 4ull * f.rows * f.dim) {
    throw FormatError(FormatError::Kind::kTruncated, path.string() + ": payload size does not match header");
  }
  f.data.resize(f.rows * f.dim);
  load_f32(bytes, 16, f.data);
  return f;
}

std::vector<CameraPose> parse_poses(const std::string& text) {
  std::vector<CameraPose> poses;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    double az, el, r;
    std::string extra;
    if (!(fields >> az >> el >> r) || (fields >> extra)) {
      throw FormatError(FormatError::Kind::kMalformed,
                        "pose line " + std::to_string(lineno) + ": expected 'azimuth elevation radius'");
    }
    CameraPose p{deg_to_rad(az), deg_to_rad(el), r};
    p.validate();
    poses.push_back(p);
  }
  return poses;
}

std::vector<CameraPose> read_poses(const std::filesystem::path& path) { return parse_poses(read_file(path)); }

void write_poses(const std::filesystem::path& path, const std::vector<CameraPose>& poses) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& p : poses) out << rad_to_deg(p.azimuth) << ' ' << rad_to_deg(p.elevation) << ' ' << p.radius << '\n';
  write_file(path, out.str());
}

}  // namespace conrad
