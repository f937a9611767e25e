#include "lesionwise/volume_io.hpp"

#include <json.hpp>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace lesionwise {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kNiftiHeaderSize = 348;

template <typename T>
T byteswap(T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  std::reverse(bytes.begin(), bytes.end());
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

template <typename T>
T load_le(const unsigned char* p, bool swap) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) swap = !swap;
  return swap ? byteswap(value) : value;
}

template <typename T>
void store_le(std::vector<unsigned char>& out, std::size_t offset, T value) {
  if constexpr (std::endian::native == std::endian::big) value = byteswap(value);
  std::memcpy(out.data() + offset, &value, sizeof(T));
}

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VolumeFormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> slurp_gzip(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw VolumeFormatError("cannot open " + path.string());
  std::vector<unsigned char> out;
  std::array<unsigned char, 1 << 16> buf;
  int n = 0;
  while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) {
    out.insert(out.end(), buf.begin(), buf.begin() + n);
  }
  int err = 0;
  const char* msg = gzerror(f, &err);
  const bool failed = n < 0 || (err != Z_OK && err != Z_STREAM_END);
  const std::string reason = failed && msg ? msg : "";
  gzclose(f);
  if (failed) {
    throw VolumeFormatError("gzip decode failed for " + path.string() + ": " + reason,
                            out.size());
  }
  return out;
}

void spill(const fs::path& path, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw VolumeFormatError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw VolumeFormatError("short write to " + path.string());
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// ---------------------------------------------------------------------------
// Raw format

enum class RawType { U8, F32 };

struct RawHeader {
  Shape shape;
  Spacing spacing;
  RawType dtype = RawType::U8;
};

RawHeader parse_raw_header(const fs::path& path) {
  nlohmann::json j;
  try {
    std::ifstream in(path);
    if (!in) throw VolumeFormatError("cannot open " + path.string());
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw VolumeFormatError(path.string() + ": malformed JSON header: " + e.what(), e.byte);
  }

  auto triple = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3) {
      throw VolumeFormatError(path.string() + ": header field '" + key +
                              "' must be an array of three numbers");
    }
    for (const auto& v : j[key]) {
      if (!v.is_number()) {
        throw VolumeFormatError(path.string() + ": header field '" + key + "' must be numeric");
      }
    }
    return j[key];
  };

  RawHeader h;
  try {
    const auto s = triple("shape");
    for (const auto& v : s) {
      if (!v.is_number_integer()) {
        throw VolumeFormatError(path.string() + ": shape entries must be integers");
      }
    }
    h.shape = Shape(s[0].get<Index>(), s[1].get<Index>(), s[2].get<Index>());
    const auto sp = triple("spacing");
    h.spacing = Spacing(sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>());
  } catch (const std::invalid_argument& e) {
    throw VolumeFormatError(path.string() + ": " + e.what());
  }

  const std::string dtype = j.value("dtype", "");
  if (dtype == "u8") {
    h.dtype = RawType::U8;
  } else if (dtype == "f32") {
    h.dtype = RawType::F32;
  } else {
    throw VolumeFormatError(path.string() + ": unsupported dtype '" + dtype + "'");
  }
  const std::string order = j.value("order", "x-fastest");
  if (order != "x-fastest") {
    throw VolumeFormatError(path.string() + ": unsupported order '" + order + "'");
  }
  return h;
}

AnyVolume read_raw(const fs::path& path) {
  const RawPaths p = raw_paths(path);
  const RawHeader h = parse_raw_header(p.header);
  const auto bytes = slurp(p.payload);
  const std::size_t n = static_cast<std::size_t>(h.shape.size());
  const std::size_t width = h.dtype == RawType::U8 ? 1 : 4;
  if (bytes.size() != n * width) {
    throw VolumeFormatError(p.payload.string() + ": payload holds " +
                            std::to_string(bytes.size()) + " bytes, header implies " +
                            std::to_string(n * width));
  }
  if (h.dtype == RawType::U8) {
    VoxelArray<std::uint8_t> data(static_cast<Index>(n));
    std::memcpy(data.data(), bytes.data(), n);
    return BinaryMask(h.shape, h.spacing, std::move(data));
  }
  VoxelArray<float> data(static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) data[static_cast<Index>(i)] = load_le<float>(&bytes[4 * i], false);
  return Volume<float>(h.shape, h.spacing, std::move(data));
}

void write_raw_header(const fs::path& path, const Shape& s, const Spacing& sp, const char* dtype) {
  nlohmann::ordered_json j;
  j["shape"] = {s.nx, s.ny, s.nz};
  j["spacing"] = {sp.sx, sp.sy, sp.sz};
  j["dtype"] = dtype;
  j["order"] = "x-fastest";
  const std::string text = j.dump() + "\n";
  spill(path, text.data(), text.size());
}

// ---------------------------------------------------------------------------
// NIfTI-1

enum NiftiType : std::int16_t { kUint8 = 2, kInt16 = 4, kFloat32 = 16 };

AnyVolume read_nifti(const fs::path& path) {
  const std::string name = path.filename().string();
  const auto bytes = has_suffix(name, ".gz") ? slurp_gzip(path) : slurp(path);
  if (bytes.size() < kNiftiHeaderSize) {
    throw VolumeFormatError(path.string() + ": truncated NIfTI header", bytes.size());
  }
  const unsigned char* b = bytes.data();

  bool swap = false;
  const auto sizeof_hdr = load_le<std::int32_t>(b, false);
  if (sizeof_hdr != 348) {
    if (byteswap(sizeof_hdr) != 348) {
      throw VolumeFormatError(path.string() + ": sizeof_hdr is " + std::to_string(sizeof_hdr) +
                              ", expected 348", 0);
    }
    swap = true;
  }
  if (std::memcmp(b + 344, "n+1\0", 4) != 0) {
    throw VolumeFormatError(path.string() + ": magic is not 'n+1' (single-file NIfTI-1 only)", 344);
  }

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = load_le<std::int16_t>(b + 40 + 2 * i, swap);
  if (dim[0] < 3 || dim[0] > 7) {
    throw VolumeFormatError(path.string() + ": dim[0] = " + std::to_string(dim[0]) +
                            " is not a 3D volume", 40);
  }
  for (int i = 1; i <= 3; ++i) {
    if (dim[i] <= 0) {
      throw VolumeFormatError(path.string() + ": dim[" + std::to_string(i) + "] must be positive",
                              40 + 2 * i);
    }
  }
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[i] > 1) {
      throw VolumeFormatError(path.string() + ": only 3D volumes are supported (dim[" +
                              std::to_string(i) + "] = " + std::to_string(dim[i]) + ")",
                              40 + 2 * i);
    }
  }

  const auto datatype = load_le<std::int16_t>(b + 70, swap);
  const auto bitpix = load_le<std::int16_t>(b + 72, swap);
  int width = 0;
  switch (datatype) {
    case kUint8: width = 1; break;
    case kInt16: width = 2; break;
    case kFloat32: width = 4; break;
    default:
      throw VolumeFormatError(path.string() + ": unsupported datatype " + std::to_string(datatype),
                              70);
  }
  if (bitpix != 8 * width) {
    throw VolumeFormatError(path.string() + ": bitpix " + std::to_string(bitpix) +
                            " inconsistent with datatype", 72);
  }

  std::array<float, 4> pixdim{};
  for (int i = 0; i < 4; ++i) pixdim[i] = load_le<float>(b + 76 + 4 * i, swap);
  Spacing spacing;
  try {
    spacing = Spacing(std::abs(pixdim[1]), std::abs(pixdim[2]), std::abs(pixdim[3]));
  } catch (const std::invalid_argument&) {
    throw VolumeFormatError(path.string() + ": pixdim[1..3] must be nonzero and finite", 80);
  }

  const float vox_offset = load_le<float>(b + 108, swap);
  if (!(vox_offset >= 0.0f) || vox_offset < static_cast<float>(kNiftiHeaderSize)) {
    throw VolumeFormatError(path.string() + ": invalid vox_offset", 108);
  }
  float slope = load_le<float>(b + 112, swap);
  float inter = load_le<float>(b + 116, swap);
  const bool scaled = std::isfinite(slope) && slope != 0.0f && !(slope == 1.0f && inter == 0.0f);
  if (!std::isfinite(inter)) inter = 0.0f;

  const Shape shape(dim[1], dim[2], dim[3]);
  const std::size_t n = static_cast<std::size_t>(shape.size());
  const auto offset = static_cast<std::size_t>(vox_offset);
  if (bytes.size() < offset + n * width) {
    throw VolumeFormatError(path.string() + ": payload truncated, expected " +
                            std::to_string(n * width) + " bytes of voxel data", bytes.size());
  }
  const unsigned char* data = b + offset;

  if (datatype == kUint8 && !scaled) {
    VoxelArray<std::uint8_t> out(static_cast<Index>(n));
    std::memcpy(out.data(), data, n);
    return BinaryMask(shape, spacing, std::move(out));
  }
  VoxelArray<float> out(static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    float v = 0.0f;
    switch (datatype) {
      case kUint8: v = data[i]; break;
      case kInt16: v = load_le<std::int16_t>(data + 2 * i, swap); break;
      default: v = load_le<float>(data + 4 * i, swap); break;
    }
    out[static_cast<Index>(i)] = scaled ? v * slope + inter : v;
  }
  return Volume<float>(shape, spacing, std::move(out));
}

template <typename Scalar>
void write_nifti_impl(const Volume<Scalar>& v, const fs::path& path, std::int16_t datatype) {
  const Shape& s = v.shape();
  if (s.nx > 32767 || s.ny > 32767 || s.nz > 32767) {
    throw VolumeFormatError("NIfTI-1 cannot store axes longer than 32767 voxels");
  }
  const std::size_t width = sizeof(Scalar);
  const std::size_t n = static_cast<std::size_t>(s.size());
  std::vector<unsigned char> out(352 + n * width, 0);

  store_le<std::int32_t>(out, 0, 348);
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(s.nx),
                                         static_cast<std::int16_t>(s.ny),
                                         static_cast<std::int16_t>(s.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store_le<std::int16_t>(out, 40 + 2 * i, dim[i]);
  store_le<std::int16_t>(out, 70, datatype);
  store_le<std::int16_t>(out, 72, static_cast<std::int16_t>(8 * width));
  const std::array<float, 8> pixdim{1.0f, static_cast<float>(v.spacing().sx),
                                    static_cast<float>(v.spacing().sy),
                                    static_cast<float>(v.spacing().sz), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) store_le<float>(out, 76 + 4 * i, pixdim[i]);
  store_le<float>(out, 108, 352.0f);
  store_le<float>(out, 112, 1.0f);
  out[123] = 10;  // xyzt_units: mm, s
  store_le<std::int16_t>(out, 254, 1);  // sform_code: scanner
  const std::array<float, 3> srow_diag{pixdim[1], pixdim[2], pixdim[3]};
  for (int r = 0; r < 3; ++r) store_le<float>(out, 280 + 16 * r + 4 * r, srow_diag[r]);
  std::memcpy(out.data() + 344, "n+1\0", 4);

  for (std::size_t i = 0; i < n; ++i) {
    if constexpr (sizeof(Scalar) == 1) {
      out[352 + i] = v[static_cast<Index>(i)];
    } else {
      store_le<Scalar>(out, 352 + width * i, v[static_cast<Index>(i)]);
    }
  }
  spill(path, out.data(), out.size());
}

}  // namespace

RawPaths raw_paths(const fs::path& path) {
  fs::path stem = path;
  const auto ext = path.extension().string();
  if (ext == ".json" || ext == ".raw") stem.replace_extension();
  fs::path header = stem;
  header += ".json";
  fs::path payload = stem;
  payload += ".raw";
  return {header, payload};
}

bool is_nifti_path(const fs::path& path) {
  const std::string name = path.filename().string();
  return has_suffix(name, ".nii") || has_suffix(name, ".nii.gz");
}

bool is_volume_path(const fs::path& path) {
  return is_nifti_path(path) || path.extension() == ".json";
}

AnyVolume read_volume(const fs::path& path) {
  return is_nifti_path(path) ? read_nifti(path) : read_raw(path);
}

BinaryMask read_mask(const fs::path& path) {
  return std::visit(
      [](auto&& v) -> BinaryMask {
        return BinaryMask::like(v, (v.array() != 0).template cast<std::uint8_t>());
      },
      read_volume(path));
}

LogitVolume read_real(const fs::path& path) {
  return std::visit([](auto&& v) { return LogitVolume::like(v, v.array()); }, read_volume(path));
}

void write_raw(const BinaryMask& volume, const fs::path& path) {
  const RawPaths p = raw_paths(path);
  write_raw_header(p.header, volume.shape(), volume.spacing(), "u8");
  spill(p.payload, volume.array().data(), static_cast<std::size_t>(volume.size()));
}

void write_raw(const Volume<float>& volume, const fs::path& path) {
  const RawPaths p = raw_paths(path);
  write_raw_header(p.header, volume.shape(), volume.spacing(), "f32");
  std::vector<unsigned char> bytes(4 * static_cast<std::size_t>(volume.size()));
  for (Index i = 0; i < volume.size(); ++i) store_le<float>(bytes, 4 * static_cast<std::size_t>(i), volume[i]);
  spill(p.payload, bytes.data(), bytes.size());
}

void write_raw(const Volume<double>& volume, const fs::path& path) {
  write_raw(Volume<float>::like(volume, volume.array()), path);
}

void write_nifti(const BinaryMask& volume, const fs::path& path) {
  write_nifti_impl(volume, path, kUint8);
}

void write_nifti(const Volume<float>& volume, const fs::path& path) {
  write_nifti_impl(volume, path, kFloat32);
}

void write_nifti(const Volume<double>& volume, const fs::path& path) {
  write_nifti(Volume<float>::like(volume, volume.array()), path);
}

}  // namespace lesionwise
