#include "prosteval/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "json.hpp"
#include "prosteval/error.hpp"

namespace prosteval {

namespace {

using nlohmann::json;

constexpr std::string_view kHeaderSuffix = ".vol.json";
constexpr std::string_view kRawSuffix = ".vol.raw";

std::string describe(const Dims& d) {
  std::ostringstream os;
  os << d.nx << "x" << d.ny << "x" << d.nz;
  return os.str();
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

}  // namespace

std::string_view kind_name(VolumeKind kind) {
  switch (kind) {
    case VolumeKind::intensity: return "intensity";
    case VolumeKind::label: return "label";
    case VolumeKind::probability: return "probability";
  }
  return "intensity";
}

VolumeKind parse_kind(std::string_view text) {
  if (text == "intensity") return VolumeKind::intensity;
  if (text == "label") return VolumeKind::label;
  if (text == "probability" || text == "probability-channel") return VolumeKind::probability;
  fail(ErrorKind::data, "unknown volume kind '" + std::string(text) + "'");
}

Volume::Volume(Dims dims, Spacing spacing, VolumeKind kind, std::vector<float> values)
    : dims_(dims), spacing_(spacing), kind_(kind), values_(std::move(values)) {
  require(dims_.nx >= 1 && dims_.ny >= 1 && dims_.nz >= 1, ErrorKind::data,
          "volume dims must be >= 1, got " + describe(dims_));
  require(std::isfinite(spacing_.sx) && std::isfinite(spacing_.sy) && std::isfinite(spacing_.sz) &&
              spacing_.sx > 0 && spacing_.sy > 0 && spacing_.sz > 0,
          ErrorKind::data, "voxel spacing must be positive and finite");
  require(values_.size() == dims_.count(), ErrorKind::data,
          "volume holds " + std::to_string(values_.size()) + " values, dims " + describe(dims_) + " need " +
              std::to_string(dims_.count()));
  for (float v : values_) {
    if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite voxel value");
    if (kind_ == VolumeKind::label && !(v >= 0.0f && v <= 5.0f && v == std::floor(v)))
      fail(ErrorKind::data, "label value " + std::to_string(v) + " outside {0..5}");
    if (kind_ == VolumeKind::probability && !(v >= 0.0f && v <= 1.0f))
      fail(ErrorKind::data, "probability value " + std::to_string(v) + " outside [0,1]");
  }
}

Volume Volume::filled(Dims dims, Spacing spacing, VolumeKind kind, float value) {
  return Volume(dims, spacing, kind, std::vector<float>(dims.count(), value));
}

Index3 Volume::coords(std::size_t i) const {
  const auto nx = static_cast<std::size_t>(dims_.nx);
  const auto ny = static_cast<std::size_t>(dims_.ny);
  return Index3{static_cast<int>(i % nx), static_cast<int>((i / nx) % ny), static_cast<int>(i / (nx * ny))};
}

ProbStack::ProbStack(std::vector<Volume> channels) : channels_(std::move(channels)) {
  require(channels_.size() == static_cast<std::size_t>(kNumClasses), ErrorKind::data,
          "probability stack needs 6 channels, got " + std::to_string(channels_.size()));
  for (const Volume& c : channels_) {
    require(c.kind() == VolumeKind::probability, ErrorKind::data, "stack channel is not a probability volume");
    require(c.same_grid(channels_.front()), ErrorKind::data, "stack channels do not share one grid");
  }
  const std::size_t n = channels_.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const Volume& c : channels_) sum += c[i];
    if (std::abs(sum - 1.0) > kSumTolerance) {
      fail(ErrorKind::data, "channel probabilities sum to " + std::to_string(sum) + " at voxel " + std::to_string(i));
    }
  }
}

ZoneMask::ZoneMask(Volume pz, Volume tz) : pz_(std::move(pz)), tz_(std::move(tz)) {
  require(pz_.same_grid(tz_), ErrorKind::data, "PZ and TZ masks are on different grids");
  for (std::size_t i = 0; i < pz_.size(); ++i) {
    require(!(pz_[i] != 0.0f && tz_[i] != 0.0f), ErrorKind::data, "PZ and TZ masks overlap");
  }
}

Zone ZoneMask::zone_at(std::size_t voxel) const {
  if (pz_[voxel] != 0.0f) return Zone::pz;
  if (tz_[voxel] != 0.0f) return Zone::tz;
  return Zone::unknown;
}

Zone ZoneMask::majority_zone(std::span<const std::size_t> voxels) const {
  std::size_t n_pz = 0;
  std::size_t n_tz = 0;
  for (std::size_t v : voxels) {
    switch (zone_at(v)) {
      case Zone::pz: ++n_pz; break;
      case Zone::tz: ++n_tz; break;
      case Zone::unknown: break;
    }
  }
  if (2 * n_pz > voxels.size()) return Zone::pz;
  if (2 * n_tz > voxels.size()) return Zone::tz;
  return Zone::unknown;
}

// ---------------------------------------------------------------------------

std::filesystem::path volume_header_path(const std::filesystem::path& path) {
  if (ends_with(path.string(), kHeaderSuffix)) return path;
  return std::filesystem::path(path.string() + std::string(kHeaderSuffix));
}

Volume read_volume(const std::filesystem::path& path) {
  const std::filesystem::path header_path = volume_header_path(path);
  std::ifstream hin(header_path);
  require(hin.good(), ErrorKind::data, "cannot open volume header " + header_path.string());
  json h;
  try {
    hin >> h;
  } catch (const json::exception& e) {
    fail(ErrorKind::data, "malformed volume header " + header_path.string() + ": " + e.what());
  }

  Dims dims;
  Spacing spacing;
  std::string dtype;
  VolumeKind kind = VolumeKind::intensity;
  std::string data_name;
  try {
    const auto d = h.at("dims").get<std::vector<int>>();
    const auto s = h.at("spacing_mm").get<std::vector<double>>();
    require(d.size() == 3 && s.size() == 3, ErrorKind::data, "dims and spacing_mm need 3 entries");
    dims = {d[0], d[1], d[2]};
    spacing = {s[0], s[1], s[2]};
    dtype = h.at("dtype").get<std::string>();
    kind = parse_kind(h.at("kind").get<std::string>());
    data_name = h.at("data").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::data, "invalid volume header " + header_path.string() + ": " + e.what());
  }
  require(dims.nx >= 1 && dims.ny >= 1 && dims.nz >= 1, ErrorKind::data, "volume dims must be >= 1");
  require(dtype == "u8" || dtype == "f32", ErrorKind::data, "unsupported dtype '" + dtype + "'");

  const std::filesystem::path data_path = header_path.parent_path() / data_name;
  std::ifstream din(data_path, std::ios::binary);
  require(din.good(), ErrorKind::data, "cannot open volume payload " + data_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(din)), std::istreambuf_iterator<char>());

  const std::size_t n = dims.count();
  const std::size_t width = dtype == "u8" ? 1 : 4;
  require(bytes.size() == n * width, ErrorKind::data,
          "payload " + data_path.string() + " has " + std::to_string(bytes.size()) + " bytes, header implies " +
              std::to_string(n * width));

  std::vector<float> values(n);
  if (width == 1) {
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<float>(static_cast<unsigned char>(bytes[i]));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, bytes.data() + 4 * i, 4);
      values[i] = std::bit_cast<float>(to_little_endian(bits));
    }
  }
  return Volume(dims, spacing, kind, std::move(values));
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  const std::filesystem::path header_path = volume_header_path(path);
  std::string stem = header_path.filename().string();
  stem.resize(stem.size() - kHeaderSuffix.size());
  const std::string data_name = stem + std::string(kRawSuffix);
  const bool as_u8 = v.kind() == VolumeKind::label;

  json h;
  h["dims"] = {v.dims().nx, v.dims().ny, v.dims().nz};
  h["spacing_mm"] = {v.spacing().sx, v.spacing().sy, v.spacing().sz};
  h["dtype"] = as_u8 ? "u8" : "f32";
  h["kind"] = kind_name(v.kind());
  h["data"] = data_name;

  std::vector<char> bytes;
  if (as_u8) {
    bytes.reserve(v.size());
    for (float x : v.values()) bytes.push_back(static_cast<char>(static_cast<unsigned char>(x)));
  } else {
    bytes.resize(4 * v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(v[i]));
      std::memcpy(bytes.data() + 4 * i, &bits, 4);
    }
  }

  std::ofstream dout(header_path.parent_path() / data_name, std::ios::binary | std::ios::trunc);
  require(dout.good(), ErrorKind::data, "cannot write volume payload next to " + header_path.string());
  dout.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(dout.good(), ErrorKind::data, "short write for " + header_path.string());

  std::ofstream hout(header_path, std::ios::trunc);
  require(hout.good(), ErrorKind::data, "cannot write volume header " + header_path.string());
  hout << h.dump(2) << '\n';
  require(hout.good(), ErrorKind::data, "short write for " + header_path.string());
}

std::filesystem::path prob_channel_path(const std::filesystem::path& prefix, int channel) {
  return std::filesystem::path(prefix.string() + "_c" + std::to_string(channel));
}

ProbStack read_prob_stack(const std::filesystem::path& prefix) {
  std::vector<Volume> channels;
  channels.reserve(kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) channels.push_back(read_volume(prob_channel_path(prefix, c)));
  return ProbStack(std::move(channels));
}

void write_prob_stack(const ProbStack& stack, const std::filesystem::path& prefix) {
  for (int c = 0; c < kNumClasses; ++c) write_volume(stack.channel(c), prob_channel_path(prefix, c));
}

// ---------------------------------------------------------------------------

namespace {

struct AxisSample {
  int i0;
  int i1;
  double frac;
};

// Source position of output index i along one axis, clamped into [0, n-1].
AxisSample axis_sample(int i, int n_src, double src_spacing, double dst_spacing) {
  double u = (static_cast<double>(i) + 0.5) * dst_spacing / src_spacing - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(n_src - 1));
  const int i0 = static_cast<int>(std::floor(u));
  const int i1 = std::min(i0 + 1, n_src - 1);
  return {i0, i1, u - i0};
}

}  // namespace

Volume resample_in_plane(const Volume& v, double tx, double ty, Interpolation interp) {
  require(tx > 0 && ty > 0 && std::isfinite(tx) && std::isfinite(ty), ErrorKind::config,
          "target spacing must be positive");
  require(!(interp == Interpolation::bilinear && v.kind() == VolumeKind::label), ErrorKind::config,
          "label volumes must be resampled with nearest-neighbor interpolation");
  const Dims& src = v.dims();
  const Spacing& s = v.spacing();
  const Dims dst{std::max(1, static_cast<int>(std::lround(src.nx * s.sx / tx))),
                 std::max(1, static_cast<int>(std::lround(src.ny * s.sy / ty))), src.nz};

  std::vector<AxisSample> xs(static_cast<std::size_t>(dst.nx));
  std::vector<AxisSample> ys(static_cast<std::size_t>(dst.ny));
  for (int i = 0; i < dst.nx; ++i) xs[static_cast<std::size_t>(i)] = axis_sample(i, src.nx, s.sx, tx);
  for (int j = 0; j < dst.ny; ++j) ys[static_cast<std::size_t>(j)] = axis_sample(j, src.ny, s.sy, ty);

  std::vector<float> out(dst.count());
  std::size_t k = 0;
  for (int z = 0; z < dst.nz; ++z) {
    for (int j = 0; j < dst.ny; ++j) {
      const AxisSample& ay = ys[static_cast<std::size_t>(j)];
      for (int i = 0; i < dst.nx; ++i, ++k) {
        const AxisSample& ax = xs[static_cast<std::size_t>(i)];
        if (interp == Interpolation::nearest) {
          const int xi = ax.frac < 0.5 ? ax.i0 : ax.i1;
          const int yi = ay.frac < 0.5 ? ay.i0 : ay.i1;
          out[k] = v(xi, yi, z);
        } else {
          const double top = (1.0 - ax.frac) * v(ax.i0, ay.i0, z) + ax.frac * v(ax.i1, ay.i0, z);
          const double bottom = (1.0 - ax.frac) * v(ax.i0, ay.i1, z) + ax.frac * v(ax.i1, ay.i1, z);
          out[k] = static_cast<float>((1.0 - ay.frac) * top + ay.frac * bottom);
        }
      }
    }
  }
  return Volume(dst, Spacing{tx, ty, s.sz}, v.kind(), std::move(out));
}

Volume crop_center(const Volume& v, int w, int h) {
  const Dims& src = v.dims();
  require(w >= 1 && h >= 1, ErrorKind::config, "crop size must be positive");
  require(w <= src.nx && h <= src.ny, ErrorKind::config,
          "crop " + std::to_string(w) + "x" + std::to_string(h) + " exceeds the resampled extent " +
              std::to_string(src.nx) + "x" + std::to_string(src.ny));
  const int ox = (src.nx - w) / 2;
  const int oy = (src.ny - h) / 2;
  const Dims dst{w, h, src.nz};
  std::vector<float> out;
  out.reserve(dst.count());
  for (int z = 0; z < src.nz; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.push_back(v(ox + x, oy + y, z));
  return Volume(dst, v.spacing(), v.kind(), std::move(out));
}

Volume normalize_min_max(const Volume& v, NormalizationScope scope) {
  require(v.kind() == VolumeKind::intensity, ErrorKind::config, "normalization applies to intensity volumes");
  const std::size_t n = v.size();
  const std::size_t block = scope == NormalizationScope::volume
                                ? n
                                : static_cast<std::size_t>(v.dims().nx) * static_cast<std::size_t>(v.dims().ny);
  std::vector<float> out(n, 0.0f);
  for (std::size_t start = 0; start < n; start += block) {
    const auto first = v.values().begin() + static_cast<std::ptrdiff_t>(start);
    const auto last = first + static_cast<std::ptrdiff_t>(block);
    const auto [lo_it, hi_it] = std::minmax_element(first, last);
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi == lo) continue;
    for (std::size_t i = start; i < start + block; ++i) {
      const double t = (static_cast<double>(v[i]) - lo) / (hi - lo);
      out[i] = static_cast<float>(t);
    }
  }
  return Volume(v.dims(), v.spacing(), VolumeKind::intensity, std::move(out));
}

namespace {

void check_same_z(const Volume& v, const Spacing& target) {
  require(std::abs(target.sz - v.spacing().sz) <= 1e-6 * v.spacing().sz, ErrorKind::config,
          "preprocessing resamples in-plane only: target z spacing " + std::to_string(target.sz) +
              " differs from source " + std::to_string(v.spacing().sz));
}

Volume with_spacing(Volume v, const Spacing& target) {
  std::vector<float> values(v.values().begin(), v.values().end());
  return Volume(v.dims(), target, v.kind(), std::move(values));
}

}  // namespace

Volume preprocess(const Volume& v, const Spacing& target, int crop_w, int crop_h, NormalizationScope scope) {
  require(v.kind() == VolumeKind::intensity, ErrorKind::config, "preprocess expects an intensity volume");
  check_same_z(v, target);
  Volume resampled = resample_in_plane(v, target.sx, target.sy, Interpolation::bilinear);
  Volume cropped = crop_center(resampled, crop_w, crop_h);
  return with_spacing(normalize_min_max(cropped, scope), target);
}

Volume preprocess_labels(const Volume& v, const Spacing& target, int crop_w, int crop_h) {
  check_same_z(v, target);
  Volume resampled = resample_in_plane(v, target.sx, target.sy, Interpolation::nearest);
  return with_spacing(crop_center(resampled, crop_w, crop_h), target);
}

std::vector<std::uint8_t> foreground_mask(const Volume& v) {
  std::vector<std::uint8_t> mask(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) mask[i] = v[i] != 0.0f ? 1 : 0;
  return mask;
}

}  // namespace prosteval
