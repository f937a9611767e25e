// Volume file formats.
//
// Raw: a JSON header next to a little-endian binary payload.
//
//   foo.json   {"shape":[nx,ny,nz],"spacing":[sx,sy,sz],"dtype":"u8"|"f32","order":"x-fastest"}
//   foo.raw    exactly nx*ny*nz values, x fastest
//
// Either file of the pair may be passed as the path. Round trips are bit-exact.
//
// NIfTI-1: single-file .nii or .nii.gz, 3D only, datatypes uint8, int16 and
// float32. Spacing comes from pixdim[1..3]. A minimal uncompressed writer is
// provided for exporting u8/f32 volumes.

#ifndef LESIONWISE_VOLUME_IO_HPP
#define LESIONWISE_VOLUME_IO_HPP

#include "lesionwise/volume.hpp"

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>

namespace lesionwise {

/// Raised for unreadable or malformed volume files.
class VolumeFormatError : public std::runtime_error {
 public:
  explicit VolumeFormatError(const std::string& what) : std::runtime_error(what) {}
  VolumeFormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  /// Byte offset of the offending field, or npos when not applicable.
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_ = static_cast<std::size_t>(-1);
};

/// What a file held on disk. int16 NIfTI data is widened to f32.
using AnyVolume = std::variant<BinaryMask, Volume<float>>;

AnyVolume read_volume(const std::filesystem::path& path);

/// Reads any supported file as a mask; nonzero voxels are foreground.
BinaryMask read_mask(const std::filesystem::path& path);

/// Reads any supported file as real values (u8 data is converted).
LogitVolume read_real(const std::filesystem::path& path);

/// Writes the raw pair. `path` may name the .json or .raw file or a bare stem.
void write_raw(const BinaryMask& volume, const std::filesystem::path& path);
void write_raw(const Volume<float>& volume, const std::filesystem::path& path);
/// Doubles are narrowed to f32 on disk.
void write_raw(const Volume<double>& volume, const std::filesystem::path& path);

/// Uncompressed single-file NIfTI-1 with an identity-like affine scaled by spacing.
void write_nifti(const BinaryMask& volume, const std::filesystem::path& path);
void write_nifti(const Volume<float>& volume, const std::filesystem::path& path);
void write_nifti(const Volume<double>& volume, const std::filesystem::path& path);

/// Header and payload paths of a raw pair, derived from either member or the stem.
struct RawPaths {
  std::filesystem::path header;
  std::filesystem::path payload;
};
RawPaths raw_paths(const std::filesystem::path& path);

bool is_nifti_path(const std::filesystem::path& path);
/// True for paths read_volume can open: .json/.raw pairs and .nii/.nii.gz.
bool is_volume_path(const std::filesystem::path& path);

}  // namespace lesionwise

#endif  // LESIONWISE_VOLUME_IO_HPP
