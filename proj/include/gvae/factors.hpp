#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "gvae/binio.hpp"
#include "gvae/rng.hpp"
#include "gvae/tensor.hpp"

namespace gvae {

// Ground-truth generative factors of the synthetic sprite data. The roster is
// fixed by position: factor 0 selects the sprite kind, factor 1 its size,
// factors 2 and 3 its horizontal and vertical position.
struct factor_spec_entry {
  std::string name;
  int cardinality = 0;
};

struct factor_spec {
  std::vector<factor_spec_entry> factors;
  int image_height = 16;
  int image_width = 16;

  static constexpr long kGridCap = 65536;

  // Sprite geometry. Radii grow linearly with the scale index; position
  // lattices step exactly one pixel so translated indices render to exact
  // pixel shifts of each other.
  static constexpr double kRadiusBase = 2.0;
  static constexpr double kRadiusStep = 0.35;

  static factor_spec defaults() {
    return {{{"shape", 3}, {"scale", 6}, {"pos_x", 8}, {"pos_y", 8}}, 16, 16};
  }

  int count_factors() const { return int(factors.size()); }

  long grid_size() const {
    long n = 1;
    for (const auto& f : factors) n *= f.cardinality;
    return n;
  }

  double radius(int scale_idx) const { return kRadiusBase + kRadiusStep * scale_idx; }
  double max_radius() const { return radius(factors[1].cardinality - 1); }

  // First lattice center along an axis of `extent` pixels with `card` stops.
  static double lattice_origin(int extent, int card) {
    return (extent - card + 1) / 2.0;
  }
  double center_x(int pos_idx) const {
    return lattice_origin(image_width, factors[2].cardinality) + pos_idx;
  }
  double center_y(int pos_idx) const {
    return lattice_origin(image_height, factors[3].cardinality) + pos_idx;
  }

  void validate() const {
    if (factors.size() != 4)
      throw config_error("factor spec: expected 4 factors (shape, scale, pos_x, pos_y)");
    for (const auto& f : factors) {
      if (f.name.empty()) throw config_error("factor spec: empty factor name");
      if (f.cardinality < 2)
        throw config_error("factor spec: factor '" + f.name +
                           "' needs cardinality >= 2");
    }
    if (factors[0].cardinality > 3)
      throw config_error("factor spec: only 3 sprite kinds exist");
    if (image_height < 4 || image_width < 4)
      throw config_error("factor spec: image too small");
    if (grid_size() > kGridCap)
      throw config_error("factor spec: grid size " + std::to_string(grid_size()) +
                         " exceeds cap " + std::to_string(kGridCap));
    // The largest sprite must fit at the extreme lattice positions.
    const double r = max_radius();
    if (center_x(0) - r < 0.0 ||
        center_x(factors[2].cardinality - 1) + r > image_width ||
        center_y(0) - r < 0.0 ||
        center_y(factors[3].cardinality - 1) + r > image_height)
      throw config_error("factor spec: largest sprite clips the frame");
  }

  long flat_index(const std::vector<int>& idx) const {
    if (int(idx.size()) != count_factors())
      throw contract_error("factor index arity mismatch");
    long flat = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= factors[k].cardinality)
        throw contract_error("factor index out of range for '" + factors[k].name + "'");
      flat = flat * factors[k].cardinality + idx[k];
    }
    return flat;
  }

  std::vector<int> unflatten(long flat) const {
    if (flat < 0 || flat >= grid_size())
      throw contract_error("flat index out of range");
    std::vector<int> idx(factors.size());
    for (int k = count_factors() - 1; k >= 0; --k) {
      idx[std::size_t(k)] = int(flat % factors[std::size_t(k)].cardinality);
      flat /= factors[std::size_t(k)].cardinality;
    }
    return idx;
  }

  bool operator==(const factor_spec& o) const {
    if (factors.size() != o.factors.size() || image_height != o.image_height ||
        image_width != o.image_width)
      return false;
    for (std::size_t k = 0; k < factors.size(); ++k)
      if (factors[k].name != o.factors[k].name ||
          factors[k].cardinality != o.factors[k].cardinality)
        return false;
    return true;
  }
};

namespace detail {

inline bool inside_sprite(int kind, double dx, double dy, double r) {
  switch (kind) {
    case 0:  // square
      return std::abs(dx) <= r && std::abs(dy) <= r;
    case 1:  // ellipse, squashed vertically
      return (dx * dx) / (r * r) + (dy * dy) / (0.75 * r * 0.75 * r) <= 1.0;
    default:  // isoceles triangle, apex up: half-width grows linearly with dy
      return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2.0;
  }
}

}  // namespace detail

// Rasterize one sprite. Coverage per pixel comes from a 4x4 subpixel grid and
// is quantized to u8 immediately, so disk round trips are bit-exact.
inline std::vector<std::uint8_t> render_u8(const factor_spec& spec,
                                           const std::vector<int>& idx) {
  spec.flat_index(idx);  // validates arity and ranges
  const int kind = idx[0];
  const double r = spec.radius(idx[1]);
  const double cx = spec.center_x(idx[2]);
  const double cy = spec.center_y(idx[3]);
  std::vector<std::uint8_t> out(std::size_t(spec.image_height) * spec.image_width);
  for (int py = 0; py < spec.image_height; ++py)
    for (int px = 0; px < spec.image_width; ++px) {
      int hit = 0;
      for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
          const double x = px + (sx + 0.5) / 4.0 - cx;
          const double y = py + (sy + 0.5) / 4.0 - cy;
          hit += detail::inside_sprite(kind, x, y, r) ? 1 : 0;
        }
      out[std::size_t(py) * spec.image_width + px] =
          std::uint8_t(std::lround(255.0 * hit / 16.0));
    }
  return out;
}

// The full factor grid, rendered once and immutable afterwards. Images live
// in lexicographic index order (factor 0 slowest).
class factor_dataset {
 public:
  explicit factor_dataset(factor_spec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const long n = spec_.grid_size();
    pixels_.resize(std::size_t(n) * std::size_t(image_size()));
    for (long i = 0; i < n; ++i) {
      const auto img = render_u8(spec_, spec_.unflatten(i));
      std::copy(img.begin(), img.end(),
                pixels_.begin() + long(i) * image_size());
    }
  }

  const factor_spec& spec() const { return spec_; }
  long count() const { return spec_.grid_size(); }
  int image_size() const { return spec_.image_height * spec_.image_width; }

  const std::uint8_t* image_u8(long i) const {
    return pixels_.data() + check_index(i) * image_size();
  }

  int label(long i, int factor) const {
    return spec_.unflatten(check_index(i))[std::size_t(factor)];
  }

  // Observations as reals in [0,1], one image per row.
  tensor<float> observations(const std::vector<long>& ids) const {
    tensor<float> out({int(ids.size()), image_size()});
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const std::uint8_t* src = image_u8(ids[r]);
      for (int c = 0; c < image_size(); ++c)
        out.at(int(r), c) = float(src[c]) / 255.0f;
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("cannot open '" + path + "' for writing");
    write_magic(os, "GVDS");
    write_u16(os, 1);  // version
    write_u16(os, std::uint16_t(spec_.factors.size()));
    for (const auto& f : spec_.factors) {
      write_u16(os, std::uint16_t(f.name.size()));
      os.write(f.name.data(), long(f.name.size()));
      write_u16(os, std::uint16_t(f.cardinality));
    }
    write_u16(os, std::uint16_t(spec_.image_height));
    write_u16(os, std::uint16_t(spec_.image_width));
    os.write(reinterpret_cast<const char*>(pixels_.data()), long(pixels_.size()));
    if (!os) throw format_error("short write to '" + path + "'");
  }

  static factor_dataset load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("cannot open '" + path + "'");
    expect_magic(is, "GVDS", "dataset");
    const auto version = read_u16(is, "version");
    if (version != 1)
      throw format_error("unsupported dataset version " + std::to_string(version));
    factor_spec spec;
    const int m = read_u16(is, "factor count");
    for (int k = 0; k < m; ++k) {
      factor_spec_entry f;
      const int len = read_u16(is, "name length");
      f.name.resize(std::size_t(len));
      is.read(f.name.data(), len);
      if (!is) throw format_error("truncated factor name");
      f.cardinality = read_u16(is, "cardinality");
      spec.factors.push_back(std::move(f));
    }
    spec.image_height = read_u16(is, "height");
    spec.image_width = read_u16(is, "width");
    spec.validate();
    factor_dataset ds(private_tag{}, std::move(spec));
    ds.pixels_.resize(std::size_t(ds.count()) * std::size_t(ds.image_size()));
    is.read(reinterpret_cast<char*>(ds.pixels_.data()), long(ds.pixels_.size()));
    if (!is) throw format_error("truncated pixel payload in '" + path + "'");
    return ds;
  }

 private:
  struct private_tag {};
  factor_dataset(private_tag, factor_spec spec) : spec_(std::move(spec)) {}

  long check_index(long i) const {
    if (i < 0 || i >= count()) throw contract_error("image index out of range");
    return i;
  }

  factor_spec spec_;
  std::vector<std::uint8_t> pixels_;
};

// I.i.d. uniform draw of flat grid indices.
inline std::vector<long> sample_batch(const factor_spec& spec, rng& r, int batch_size) {
  if (batch_size < 1) throw contract_error("sample_batch: batch_size must be >= 1");
  std::vector<long> ids;
  ids.resize(std::size_t(batch_size));
  for (auto& id : ids) {
    long flat = 0;  // draw per factor so cardinality products can exceed int
    for (const auto& f : spec.factors)
      flat = flat * f.cardinality + r.uniform_int(f.cardinality);
    id = flat;
  }
  return ids;
}

struct index_pair_batch {
  std::vector<long> first, second;
};

// Pairs agreeing on factor `fixed_k`, with every other factor resampled
// independently per member.
inline index_pair_batch sample_pair_fixed_factor(const factor_spec& spec, rng& r,
                                                 int fixed_k, int batch_size) {
  if (fixed_k < 0 || fixed_k >= spec.count_factors())
    throw contract_error("sample_pair_fixed_factor: factor position out of range");
  if (batch_size < 1) throw contract_error("sample_pair_fixed_factor: batch_size >= 1");
  index_pair_batch out;
  out.first.reserve(std::size_t(batch_size));
  out.second.reserve(std::size_t(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const int shared = r.uniform_int(spec.factors[std::size_t(fixed_k)].cardinality);
    std::vector<int> ia(spec.factors.size()), ib(spec.factors.size());
    for (int k = 0; k < spec.count_factors(); ++k) {
      if (k == fixed_k) {
        ia[std::size_t(k)] = ib[std::size_t(k)] = shared;
      } else {
        ia[std::size_t(k)] = r.uniform_int(spec.factors[std::size_t(k)].cardinality);
        ib[std::size_t(k)] = r.uniform_int(spec.factors[std::size_t(k)].cardinality);
      }
    }
    out.first.push_back(spec.flat_index(ia));
    out.second.push_back(spec.flat_index(ib));
  }
  return out;
}

}  // namespace gvae
