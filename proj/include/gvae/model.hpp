#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "gvae/binio.hpp"
#include "gvae/group.hpp"
#include "gvae/nn.hpp"

namespace gvae {

// What the decoder consumes: the raw latent vector, or its cyclic embedding
// eta(z). The cyclic decoder is twice as wide since eta emits sin and cos.
enum class decoder_convention : std::uint8_t { original = 0, groupified = 1 };

inline decoder_convention convention_from_string(const std::string& s) {
  if (s == "original") return decoder_convention::original;
  if (s == "groupified") return decoder_convention::groupified;
  throw config_error("unknown decoder convention '" + s + "'");
}

inline std::string to_string(decoder_convention c) {
  return c == decoder_convention::original ? "original" : "groupified";
}

// Log-variance clamp applied before any use of the encoder output.
inline constexpr double kLogvarLo = -10.0;
inline constexpr double kLogvarHi = 10.0;

struct model_arch {
  int input_size = 256;
  int d = 6;  // latent dimension
  int n = 8;  // cyclic modulus
  activation act_fn = activation::tanh_fn;
  std::vector<int> enc_hidden = {256, 256};
  std::vector<int> dec_hidden = {256, 256};
  decoder_convention convention = decoder_convention::groupified;

  void validate() const {
    if (input_size < 1) throw config_error("model: input_size must be >= 1");
    if (d < 1) throw config_error("model: latent dimension must be >= 1");
    if (n < 2) throw config_error("model: cyclic modulus must be >= 2");
    for (int h : enc_hidden)
      if (h < 1) throw config_error("model: encoder hidden width must be >= 1");
    for (int h : dec_hidden)
      if (h < 1) throw config_error("model: decoder hidden width must be >= 1");
  }

  int dec_input() const {
    return convention == decoder_convention::groupified ? 2 * d : d;
  }

  std::vector<int> enc_sizes() const {
    std::vector<int> s{input_size};
    s.insert(s.end(), enc_hidden.begin(), enc_hidden.end());
    s.push_back(2 * d);  // mu and logvar
    return s;
  }

  std::vector<int> dec_sizes() const {
    std::vector<int> s{dec_input()};
    s.insert(s.end(), dec_hidden.begin(), dec_hidden.end());
    s.push_back(input_size);
    return s;
  }

  bool operator==(const model_arch& o) const {
    return input_size == o.input_size && d == o.d && n == o.n &&
           act_fn == o.act_fn && enc_hidden == o.enc_hidden &&
           dec_hidden == o.dec_hidden && convention == o.convention;
  }
};

template <typename T>
struct encoder_out {
  tensor<T> mu;      // [B, d]
  tensor<T> logvar;  // [B, d], clamped to [kLogvarLo, kLogvarHi]
};

// Angular frequency of the cyclic embedding. Computed identically here and in
// the tape graph so both paths multiply by the same constant.
template <typename T>
inline T eta_omega(int n) {
  return T(2) * T(M_PI) / T(n);
}

// eta: [B, d] -> [B, 2d], columns [sin_0..sin_{d-1}, cos_0..cos_{d-1}].
// Exactly n-periodic in each coordinate up to rounding.
template <typename T>
tensor<T> eta_map(const tensor<T>& z, int n) {
  if (z.rank() != 2) throw dimension_error("eta_map: rank-2 input required");
  const int b = z.shape[0], d = z.shape[1];
  const T w = eta_omega<T>(n);
  tensor<T> out({b, 2 * d});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < d; ++j) {
      const T a = z.at(i, j) * w;
      out.at(i, j) = std::sin(a);
      out.at(i, j + d) = std::cos(a);
    }
  return out;
}

// Group action on latent rows: add g to the first m coordinates. Acted
// coordinates (g_j != 0) are reduced into [0, n) to keep magnitudes bounded;
// eta is n-periodic so the reduction never changes what the decoder sees
// beyond rounding. Untouched coordinates pass through bit-identically.
template <typename T>
tensor<T> act(const cyclic_tuple& g, const tensor<T>& z) {
  if (z.rank() != 2) throw dimension_error("act: rank-2 latent batch required");
  if (g.m() > z.shape[1])
    throw contract_error("act: group arity exceeds latent dimension");
  tensor<T> out = z;
  for (int j = 0; j < g.m(); ++j) {
    if (g.values[std::size_t(j)] == 0) continue;
    for (int i = 0; i < out.shape[0]; ++i) {
      T v = out.at(i, j) + T(g.values[std::size_t(j)]);
      v = std::fmod(v, T(g.n));
      if (v < T(0)) v += T(g.n);
      out.at(i, j) = v;
    }
  }
  return out;
}

// One cyclic generator raised to the k-th power: k on coordinate i, zero
// elsewhere.
inline cyclic_tuple generator_power(int n, int d, int i, int k) {
  if (i < 0 || i >= d) throw contract_error("generator dimension out of range");
  if (k < 0 || k >= n) throw contract_error("generator power must lie in [0, n)");
  std::vector<int> v(std::size_t(d), 0);
  v[std::size_t(i)] = k;
  return cyclic_tuple(n, std::move(v));
}

// Encoder/decoder pair with deterministic convenience paths. Training builds
// its own tape graphs over `params`; everything here is gradient-free.
template <typename T>
class mlp_model {
 public:
  model_arch arch;
  param_store<T> params;

  static mlp_model create(model_arch a, std::uint64_t seed) {
    a.validate();
    mlp_model m;
    m.arch = a;
    m.enc_ = mlp<T>{"enc", a.enc_sizes(), a.act_fn};
    m.dec_ = mlp<T>{"dec", a.dec_sizes(), a.act_fn};
    m.enc_.register_params(m.params, seed);
    m.dec_.register_params(m.params, seed);
    return m;
  }

  const mlp<T>& encoder() const { return enc_; }
  const mlp<T>& decoder() const { return dec_; }
  int latent_dim() const { return arch.d; }
  int modulus() const { return arch.n; }

  encoder_out<T> encode(const tensor<T>& obs) const {
    tensor<T> raw = enc_.forward_nograd(params, obs);
    const int b = raw.shape[0], d = arch.d;
    encoder_out<T> out{tensor<T>({b, d}), tensor<T>({b, d})};
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < d; ++j) {
        out.mu.at(i, j) = raw.at(i, j);
        out.logvar.at(i, j) =
            std::min(std::max(raw.at(i, j + d), T(kLogvarLo)), T(kLogvarHi));
      }
    return out;
  }

  tensor<T> encode_mu(const tensor<T>& obs) const { return encode(obs).mu; }

  // z -> decoder logits, applying the model's input convention.
  tensor<T> decode_logits(const tensor<T>& z) const {
    if (z.rank() != 2 || z.shape[1] != arch.d)
      throw dimension_error("decode: latent batch must be [B, d]");
    if (arch.convention == decoder_convention::groupified)
      return dec_.forward_nograd(params, eta_map(z, arch.n));
    return dec_.forward_nograd(params, z);
  }

  tensor<T> decode_probs(const tensor<T>& z) const {
    tensor<T> out = decode_logits(z);
    for (T& v : out.data) v = stable_sigmoid(v);
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("cannot open '" + path + "' for writing");
    write_magic(os, "GVAE");
    write_u16(os, 1);  // version
    os.put(char(arch.act_fn));
    os.put(char(arch.convention));
    write_u16(os, std::uint16_t(arch.n));
    auto write_sizes = [&](const std::vector<int>& sizes) {
      write_u16(os, std::uint16_t(sizes.size()));
      for (int s : sizes) write_u32(os, std::uint32_t(s));
    };
    write_sizes(arch.enc_sizes());
    write_sizes(arch.dec_sizes());
    write_param_payload(os, params);
    if (!os) throw format_error("short write to '" + path + "'");
  }

  static mlp_model load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("cannot open '" + path + "'");
    expect_magic(is, "GVAE", "checkpoint");
    const auto version = read_u16(is, "version");
    if (version != 1)
      throw format_error("unsupported checkpoint version " + std::to_string(version));
    const int act_raw = is.get();
    const int conv_raw = is.get();
    if (act_raw < 0 || act_raw > 1 || conv_raw < 0 || conv_raw > 1)
      throw format_error("checkpoint header corrupt");
    model_arch a;
    a.act_fn = activation(std::uint8_t(act_raw));
    a.convention = decoder_convention(std::uint8_t(conv_raw));
    a.n = read_u16(is, "modulus");
    auto read_sizes = [&](const char* what) {
      const int count = read_u16(is, what);
      if (count < 2) throw format_error("checkpoint layer table too short");
      std::vector<int> sizes;
      sizes.reserve(std::size_t(count));
      for (int k = 0; k < count; ++k) sizes.push_back(int(read_u32(is, what)));
      return sizes;
    };
    const auto enc_sizes = read_sizes("encoder sizes");
    const auto dec_sizes = read_sizes("decoder sizes");
    a.input_size = enc_sizes.front();
    a.d = enc_sizes.back() / 2;
    a.enc_hidden.assign(enc_sizes.begin() + 1, enc_sizes.end() - 1);
    a.dec_hidden.assign(dec_sizes.begin() + 1, dec_sizes.end() - 1);
    if (enc_sizes.back() != 2 * a.d || dec_sizes.back() != a.input_size ||
        dec_sizes.front() != (a.convention == decoder_convention::groupified
                                  ? 2 * a.d
                                  : a.d))
      throw format_error("checkpoint layer table inconsistent");
    a.validate();
    mlp_model m = create(a, 0);
    read_param_payload(is, m.params);
    return m;
  }

 private:
  mlp<T> enc_, dec_;
};

// z = mu + exp(logvar / 2) * eps with eps ~ N(0, I), drawn row-major from the
// given stream.
template <typename T>
tensor<T> reparameterize(const encoder_out<T>& out, rng& r) {
  tensor<T> z = out.mu;
  for (std::size_t k = 0; k < z.data.size(); ++k)
    z.data[k] += std::exp(out.logvar.data[k] / T(2)) * T(r.normal());
  return z;
}

}  // namespace gvae
