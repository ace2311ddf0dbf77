#pragma once

#include <cmath>
#include <fstream>
#include <vector>

#include "gvae/factors.hpp"
#include "gvae/model.hpp"

namespace gvae {

// Frames decoded along one latent coordinate: decode(mu + t * e_dim) for
// t = t0, t0+step, ..., up to t1. Row 0 of obs is the traversal source.
struct traversal {
  std::vector<double> offsets;
  std::vector<tensor<float>> frames;  // one [1, pixels] row per offset
};

template <typename Codec>
traversal traverse_dim(const Codec& codec, const tensor<float>& obs_row, int dim,
                              double t0, double t1, double step) {
  if (obs_row.rank() != 2 || obs_row.shape[0] != 1)
    throw contract_error("traverse: exactly one observation row required");
  if (dim < 0 || dim >= codec.latent_dim())
    throw contract_error("traverse: dim out of range");
  if (step <= 0 || t1 < t0) throw config_error("traverse: need step > 0 and t1 >= t0");

  const auto mu = codec.encode_mu(obs_row);
  traversal out;
  const long count = long(std::floor((t1 - t0) / step + 1e-9)) + 1;
  for (long i = 0; i < count; ++i) {
    const double t = t0 + double(i) * step;
    auto z = mu;
    z.at(0, dim) += float(t);
    out.offsets.push_back(t);
    out.frames.push_back(codec.decode_probs(z));
  }
  return out;
}

struct period_report {
  int dim = 0;
  int n = 0;                      // offset distance compared
  std::vector<double> offsets;    // t values with a partner at t + n
  std::vector<double> mse;        // per-pixel MSE between the paired frames
  double mse_mean = 0;
  double mse_max = 0;
  long pairs = 0;
};

// Compares every frame at offset t with the frame at t + n. Throws when the
// range never wraps, because then the report would be vacuous.
inline period_report measure_period(const traversal& tr, int dim, int n) {
  period_report rep;
  rep.dim = dim;
  rep.n = n;
  for (std::size_t a = 0; a < tr.offsets.size(); ++a) {
    const double want = tr.offsets[a] + n;
    for (std::size_t b = a + 1; b < tr.offsets.size(); ++b) {
      if (std::abs(tr.offsets[b] - want) > 1e-6) continue;
      double se = 0;
      const auto& fa = tr.frames[a].data;
      const auto& fb = tr.frames[b].data;
      for (std::size_t p = 0; p < fa.size(); ++p) {
        const double dpx = double(fa[p]) - double(fb[p]);
        se += dpx * dpx;
      }
      const double mse = se / double(fa.size());
      rep.offsets.push_back(tr.offsets[a]);
      rep.mse.push_back(mse);
      rep.mse_mean += mse;
      rep.mse_max = std::max(rep.mse_max, mse);
      ++rep.pairs;
      break;
    }
  }
  if (rep.pairs == 0)
    throw contract_error("period report: traversal range never covers t and t + n");
  rep.mse_mean /= double(rep.pairs);
  return rep;
}

// Mean per-pixel squared error of the deterministic round trip, the scale
// against which period error is judged.
template <typename Codec>
double reconstruction_floor(const Codec& codec, const tensor<float>& obs) {
  const auto probs = codec.decode_probs(codec.encode_mu(obs));
  double se = 0;
  for (std::size_t p = 0; p < probs.data.size(); ++p) {
    const double dpx = double(probs.data[p]) - double(obs.data[p]);
    se += dpx * dpx;
  }
  return se / double(probs.data.size());
}

inline void write_pgm(const std::string& path, int height, int width,
                      const std::vector<std::uint8_t>& pixels) {
  if (long(pixels.size()) != long(height) * width)
    throw dimension_error("pgm: pixel count does not match dimensions");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw format_error("cannot open '" + path + "' for writing");
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), long(pixels.size()));
  if (!os) throw format_error("failed writing '" + path + "'");
}

// Frames laid out left to right in one image.
inline std::vector<std::uint8_t> strip_u8(const traversal& tr, int height, int width) {
  const int count = int(tr.frames.size());
  std::vector<std::uint8_t> out(std::size_t(height) * width * count, 0);
  for (int f = 0; f < count; ++f) {
    const auto& frame = tr.frames[std::size_t(f)].data;
    if (long(frame.size()) != long(height) * width)
      throw dimension_error("strip: frame size does not match dimensions");
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const float p = frame[std::size_t(y) * width + x];
        const long q = std::lround(double(p) * 255.0);
        out[std::size_t(y) * width * count + std::size_t(f) * width + x] =
            std::uint8_t(std::clamp(q, 0L, 255L));
      }
  }
  return out;
}

}  // namespace gvae
