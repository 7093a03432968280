#include "vcf/volume.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "vcf/error.hpp"

namespace vcf::volume {
namespace {

constexpr std::size_t kNiftiHeaderSize = 348;
constexpr double kOrthonormalTolerance = 1e-6;

enum NiftiType : std::int16_t {
  kNiftiUint8 = 2,
  kNiftiInt16 = 4,
  kNiftiInt32 = 8,
  kNiftiUint16 = 512,
};

// Reads little- or big-endian scalars from the header blob.
class HeaderReader {
 public:
  HeaderReader(const std::vector<std::uint8_t>& bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    std::array<std::uint8_t, sizeof(T)> raw{};
    std::memcpy(raw.data(), bytes_.data() + offset, sizeof(T));
    if (swap_) std::reverse(raw.begin(), raw.end());
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  bool swap_;
};

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in) {
  z_stream stream{};
  if (inflateInit2(&stream, 16 + MAX_WBITS) != Z_OK) {
    throw Error(ErrorCode::kIo, "zlib initialisation failed");
  }
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk{};
  stream.next_in = const_cast<Bytef*>(in.data());
  stream.avail_in = static_cast<uInt>(in.size());
  int status = Z_OK;
  while (status != Z_STREAM_END) {
    stream.next_out = chunk.data();
    stream.avail_out = static_cast<uInt>(chunk.size());
    status = inflate(&stream, Z_NO_FLUSH);
    if (status != Z_OK && status != Z_STREAM_END) {
      inflateEnd(&stream);
      throw Error(ErrorCode::kFormat, "corrupt gzip stream");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - stream.avail_out));
    if (status == Z_OK && stream.avail_in == 0 && stream.avail_out != 0) {
      inflateEnd(&stream);
      throw Error(ErrorCode::kFormat, "truncated gzip stream");
    }
  }
  inflateEnd(&stream);
  return out;
}

bool is_gzip(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

void check_budget(const std::array<int, 3>& dims, std::size_t bytes_per_voxel, const LoadOptions& options) {
  std::size_t total = bytes_per_voxel;
  for (int d : dims) {
    if (d <= 0) throw Error(ErrorCode::kFormat, "non-positive dimension");
    if (total > std::numeric_limits<std::size_t>::max() / static_cast<std::size_t>(d)) {
      throw Error(ErrorCode::kResource, "volume size overflows");
    }
    total *= static_cast<std::size_t>(d);
  }
  if (total > options.memory_budget_bytes) {
    throw Error(ErrorCode::kResource, "volume of " + std::to_string(total) + " bytes exceeds memory budget of " +
                                          std::to_string(options.memory_budget_bytes));
  }
}

// Splits an affine 3x3 block into spacing (column norms) and direction.
void frame_from_affine(const Mat3& affine, SpatialFrame& frame) {
  for (int c = 0; c < 3; ++c) {
    const double norm = affine.col(c).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw Error(ErrorCode::kFormat, "degenerate affine column");
    frame.spacing[c] = norm;
    frame.direction.col(c) = affine.col(c) / norm;
  }
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, std::size_t offset, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required for writers");
  std::memcpy(out.data() + offset, &value, sizeof(T));
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(current);
  return parts;
}

int parse_int(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(t, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kFormat, "invalid integer for " + what + ": '" + text + "'");
  }
  if (used != t.size()) throw Error(ErrorCode::kFormat, "invalid integer for " + what + ": '" + text + "'");
  return value;
}

}  // namespace

std::size_t SpatialFrame::voxel_count() const {
  return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
}

Vec3 SpatialFrame::to_physical(double i, double j, double k) const {
  return origin + direction * Vec3(spacing[0] * i, spacing[1] * j, spacing[2] * k);
}

void SpatialFrame::validate() const {
  for (int d : dims) {
    if (d <= 0) throw Error(ErrorCode::kFormat, "dimensions must be positive");
  }
  for (int c = 0; c < 3; ++c) {
    if (!(spacing[c] > 0.0) || !std::isfinite(spacing[c])) throw Error(ErrorCode::kFormat, "spacing must be positive");
  }
  if (!direction.allFinite() || orthonormality_error(direction) > kOrthonormalTolerance) {
    throw Error(ErrorCode::kFormat, "direction matrix is not orthonormal");
  }
  if (!origin.allFinite()) throw Error(ErrorCode::kFormat, "origin is not finite");
}

std::set<int> LabelVolume::labels_present() const {
  std::vector<bool> seen(std::numeric_limits<std::uint16_t>::max() + 1, false);
  for (std::uint16_t v : voxels) seen[v] = true;
  std::set<int> out;
  for (std::size_t v = 1; v < seen.size(); ++v) {
    if (seen[v]) out.insert(static_cast<int>(v));
  }
  return out;
}

void LabelVolume::validate() const {
  frame.validate();
  if (voxels.size() != frame.voxel_count()) throw Error(ErrorCode::kFormat, "voxel count does not match dims");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "read failure on " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failure on " + path.string());
}

LabelVolume load_label_volume(const std::filesystem::path& path, const LoadOptions& options) {
  const std::string name = path.filename().string();
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".lvol")) return decode_lvol(read_file_bytes(path), options);
  if (ends_with(".nii") || ends_with(".nii.gz")) return decode_nifti(read_file_bytes(path), options);
  throw Error(ErrorCode::kFormat, "unrecognised volume extension: " + name);
}

LabelVolume decode_nifti(const std::vector<std::uint8_t>& raw, const LoadOptions& options) {
  const std::vector<std::uint8_t> bytes = is_gzip(raw) ? gunzip(raw) : raw;
  if (bytes.size() < kNiftiHeaderSize) throw Error(ErrorCode::kFormat, "file shorter than NIfTI-1 header");

  std::int32_t sizeof_hdr = 0;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != 348) {
    swap = static_cast<std::int32_t>(__builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr))) == 348;
    if (!swap) throw Error(ErrorCode::kFormat, "sizeof_hdr is not 348");
  }
  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
    throw Error(ErrorCode::kFormat, "missing single-file NIfTI-1 magic 'n+1'");
  }
  const HeaderReader h(bytes, swap);

  const int ndim = h.get<std::int16_t>(40);
  if (ndim < 3 || ndim > 7) throw Error(ErrorCode::kFormat, "dim[0] must be in 3..7");
  for (int d = 4; d <= ndim; ++d) {
    if (h.get<std::int16_t>(40 + 2 * d) > 1) throw Error(ErrorCode::kFormat, "4D and higher volumes are not supported");
  }

  LabelVolume vol;
  for (int c = 0; c < 3; ++c) vol.frame.dims[c] = h.get<std::int16_t>(42 + 2 * c);

  const auto datatype = h.get<std::int16_t>(70);
  std::size_t bytes_per_voxel = 0;
  switch (datatype) {
    case kNiftiUint8: bytes_per_voxel = 1; break;
    case kNiftiInt16:
    case kNiftiUint16: bytes_per_voxel = 2; break;
    case kNiftiInt32: bytes_per_voxel = 4; break;
    default:
      throw Error(ErrorCode::kUnsupportedType, "NIfTI datatype " + std::to_string(datatype) + " is not an integer label type");
  }
  check_budget(vol.frame.dims, sizeof(std::uint16_t), options);

  std::array<double, 8> pixdim{};
  for (int c = 0; c < 8; ++c) pixdim[c] = h.get<float>(76 + 4 * c);
  const double vox_offset = h.get<float>(108);
  const double slope = h.get<float>(112);
  const double inter = h.get<float>(116);
  const int qform_code = h.get<std::int16_t>(252);
  const int sform_code = h.get<std::int16_t>(254);

  if (sform_code > 0) {
    Mat3 affine;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) affine(r, c) = h.get<float>(280 + 16 * r + 4 * c);
      vol.frame.origin[r] = h.get<float>(280 + 16 * r + 12);
    }
    frame_from_affine(affine, vol.frame);
  } else if (qform_code > 0) {
    const double b = h.get<float>(256);
    const double c = h.get<float>(260);
    const double d = h.get<float>(264);
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    Mat3 rot;
    rot << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
        2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
        2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b;
    const double qfac = pixdim[0] < 0.0 ? -1.0 : 1.0;
    rot.col(2) *= qfac;
    vol.frame.direction = rot;
    for (int k = 0; k < 3; ++k) vol.frame.spacing[k] = std::abs(pixdim[k + 1]);
    vol.frame.origin = Vec3(h.get<float>(268), h.get<float>(272), h.get<float>(276));
  } else {
    for (int k = 0; k < 3; ++k) vol.frame.spacing[k] = std::abs(pixdim[k + 1]);
  }
  vol.frame.validate();

  const std::size_t n = vol.frame.voxel_count();
  const auto offset = static_cast<std::size_t>(std::max(vox_offset, static_cast<double>(kNiftiHeaderSize)));
  if (bytes.size() < offset + n * bytes_per_voxel) throw Error(ErrorCode::kFormat, "voxel payload truncated");

  const bool scaled = slope != 0.0 && (slope != 1.0 || inter != 0.0);
  const HeaderReader payload(bytes, swap);
  vol.voxels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = offset + i * bytes_per_voxel;
    double value = 0.0;
    switch (datatype) {
      case kNiftiUint8: value = bytes[at]; break;
      case kNiftiInt16: value = payload.get<std::int16_t>(at); break;
      case kNiftiUint16: value = payload.get<std::uint16_t>(at); break;
      case kNiftiInt32: value = payload.get<std::int32_t>(at); break;
      default: break;
    }
    if (scaled) value = value * slope + inter;
    if (value < 0.0 || value > std::numeric_limits<std::uint16_t>::max() || value != std::floor(value)) {
      throw Error(ErrorCode::kFormat, "voxel value is not a valid label");
    }
    vol.voxels[i] = static_cast<std::uint16_t>(value);
  }
  return vol;
}

LabelVolume decode_lvol(const std::vector<std::uint8_t>& bytes, const LoadOptions& options) {
  const auto newline = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
  if (newline == bytes.end()) throw Error(ErrorCode::kFormat, "LVOL header line missing");
  std::istringstream header(std::string(bytes.begin(), newline));
  std::string magic;
  header >> magic;
  if (magic != "LVOL1") throw Error(ErrorCode::kFormat, "LVOL magic missing");

  LabelVolume vol;
  for (int& d : vol.frame.dims) {
    if (!(header >> d)) throw Error(ErrorCode::kFormat, "LVOL dims malformed");
  }
  for (int c = 0; c < 3; ++c) {
    if (!(header >> vol.frame.spacing[c])) throw Error(ErrorCode::kFormat, "LVOL spacing malformed");
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(header >> vol.frame.direction(r, c))) throw Error(ErrorCode::kFormat, "LVOL direction malformed");
    }
  }
  for (int c = 0; c < 3; ++c) {
    if (!(header >> vol.frame.origin[c])) throw Error(ErrorCode::kFormat, "LVOL origin malformed");
  }
  std::string trailing;
  if (header >> trailing) throw Error(ErrorCode::kFormat, "LVOL header has trailing fields");
  check_budget(vol.frame.dims, sizeof(std::uint16_t), options);
  vol.frame.validate();

  const std::size_t n = vol.frame.voxel_count();
  const auto payload_begin = static_cast<std::size_t>(newline - bytes.begin()) + 1;
  if (bytes.size() - payload_begin != 2 * n) throw Error(ErrorCode::kFormat, "LVOL payload size mismatch");
  vol.voxels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    vol.voxels[i] = static_cast<std::uint16_t>(bytes[payload_begin + 2 * i] | (bytes[payload_begin + 2 * i + 1] << 8));
  }
  return vol;
}

std::vector<std::uint8_t> encode_lvol(const LabelVolume& vol) {
  vol.validate();
  std::string header = "LVOL1";
  for (int d : vol.frame.dims) header += " " + std::to_string(d);
  for (int c = 0; c < 3; ++c) header += " " + format_g17(vol.frame.spacing[c]);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) header += " " + format_g17(vol.frame.direction(r, c));
  }
  for (int c = 0; c < 3; ++c) header += " " + format_g17(vol.frame.origin[c]);
  header += "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 2 * vol.voxels.size());
  for (std::uint16_t v : vol.voxels) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  return out;
}

std::vector<std::uint8_t> encode_nifti(const LabelVolume& vol) {
  vol.validate();
  for (int d : vol.frame.dims) {
    if (d > std::numeric_limits<std::int16_t>::max()) throw Error(ErrorCode::kValidation, "dimension too large for NIfTI-1");
  }
  constexpr std::size_t kDataOffset = 352;
  std::vector<std::uint8_t> out(kDataOffset + 2 * vol.voxels.size(), 0);
  append_le<std::int32_t>(out, 0, 348);
  append_le<std::int16_t>(out, 40, 3);
  for (int c = 0; c < 3; ++c) append_le<std::int16_t>(out, 42 + 2 * c, static_cast<std::int16_t>(vol.frame.dims[c]));
  for (int c = 3; c < 7; ++c) append_le<std::int16_t>(out, 42 + 2 * c, 1);
  append_le<std::int16_t>(out, 70, kNiftiUint16);
  append_le<std::int16_t>(out, 72, 16);
  append_le<float>(out, 76, 1.0f);
  for (int c = 0; c < 3; ++c) append_le<float>(out, 80 + 4 * c, static_cast<float>(vol.frame.spacing[c]));
  append_le<float>(out, 108, static_cast<float>(kDataOffset));
  append_le<float>(out, 112, 1.0f);
  out[123] = 2;  // xyzt_units: mm
  append_le<std::int16_t>(out, 254, 2);  // sform_code: aligned
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      append_le<float>(out, 280 + 16 * r + 4 * c, static_cast<float>(vol.frame.direction(r, c) * vol.frame.spacing[c]));
    }
    append_le<float>(out, 280 + 16 * r + 12, static_cast<float>(vol.frame.origin[r]));
  }
  std::memcpy(out.data() + 344, "n+1\0", 4);
  for (std::size_t i = 0; i < vol.voxels.size(); ++i) append_le<std::uint16_t>(out, kDataOffset + 2 * i, vol.voxels[i]);
  return out;
}

void write_lvol(const LabelVolume& vol, const std::filesystem::path& path) { write_file_bytes(path, encode_lvol(vol)); }

void write_nifti(const LabelVolume& vol, const std::filesystem::path& path) { write_file_bytes(path, encode_nifti(vol)); }

BinaryMask extract_mask(const LabelVolume& vol, int label) {
  if (label <= 0) throw Error(ErrorCode::kValidation, "mask label must be positive");
  BinaryMask mask;
  mask.frame = vol.frame;
  mask.voxels.resize(vol.voxels.size());
  for (std::size_t i = 0; i < vol.voxels.size(); ++i) {
    const bool hit = vol.voxels[i] == label;
    mask.voxels[i] = hit ? 1 : 0;
    mask.count += hit ? 1 : 0;
  }
  if (mask.count == 0) throw Error(ErrorCode::kEmptyMask, "label " + std::to_string(label) + " not present");
  return mask;
}

std::string_view to_string(ExclusionFlag flag) {
  switch (flag) {
    case ExclusionFlag::kForeignMaterial: return "foreign_material";
    case ExclusionFlag::kSingleVertebraScan: return "single_vertebra_scan";
  }
  return "unknown";
}

std::vector<VertebraRecord> parse_annotations(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kFormat, "annotations file is empty");
  const std::vector<std::string> header = split(trim(line), ',');
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[trim(header[i])] = i;
  for (const char* required : {"scan_id", "vertebra_label", "genant_grade", "flags"}) {
    if (!column.contains(required)) throw Error(ErrorCode::kFormat, std::string("annotations missing column ") + required);
  }

  std::vector<VertebraRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cells = split(line, ',');
    if (cells.size() < header.size()) cells.resize(header.size());
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kFormat, "annotations line " + std::to_string(line_no) + " has extra cells");
    }
    VertebraRecord rec;
    rec.scan_id = trim(cells[column["scan_id"]]);
    if (rec.scan_id.empty()) throw Error(ErrorCode::kFormat, "empty scan_id on line " + std::to_string(line_no));
    rec.vertebra_label = parse_int(cells[column["vertebra_label"]], "vertebra_label");
    rec.genant_grade = parse_int(cells[column["genant_grade"]], "genant_grade");
    if (rec.genant_grade < 0 || rec.genant_grade > 3) {
      throw Error(ErrorCode::kValidation,
                  "genant_grade " + std::to_string(rec.genant_grade) + " outside 0..3 on line " + std::to_string(line_no));
    }
    const std::string flags = trim(cells[column["flags"]]);
    if (!flags.empty()) {
      for (const std::string& raw : split(flags, '|')) {
        const std::string f = trim(raw);
        if (f == "foreign_material") {
          rec.exclusion_flags.insert(ExclusionFlag::kForeignMaterial);
        } else if (f == "single_vertebra_scan") {
          rec.exclusion_flags.insert(ExclusionFlag::kSingleVertebraScan);
        } else if (!f.empty()) {
          throw Error(ErrorCode::kFormat, "unknown exclusion flag '" + f + "'");
        }
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<VertebraRecord> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return parse_annotations(in);
}

void write_annotations(const std::vector<VertebraRecord>& records, std::ostream& out) {
  out << "scan_id,vertebra_label,genant_grade,flags\n";
  for (const VertebraRecord& r : records) {
    out << r.scan_id << ',' << r.vertebra_label << ',' << r.genant_grade << ',';
    bool first = true;
    for (ExclusionFlag f : r.exclusion_flags) {
      if (!first) out << '|';
      out << to_string(f);
      first = false;
    }
    out << '\n';
  }
}

}  // namespace vcf::volume
