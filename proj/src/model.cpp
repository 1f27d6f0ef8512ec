#include "ssps/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "ssps/error.hpp"

namespace ssps {

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.values().size() + l.bias.size();
  return n;
}

std::size_t ModelParams::parameter_count() const {
  return encoder.parameter_count() + projector.parameter_count() + head.parameter_count();
}

bool ModelParams::same_weights(const ModelParams& other) const {
  return encoder == other.encoder && projector == other.projector && head == other.head;
}

Network build_network(const MlpSpec& spec, Rng& rng) {
  Network net;
  if (spec.layer_dims.empty()) return net;
  if (spec.layer_dims.size() < 2) throw ConfigError("MlpSpec: need at least input and output dims");
  for (std::size_t d : spec.layer_dims) {
    if (d == 0) throw ConfigError("MlpSpec: layer dims must be positive");
  }
  for (std::size_t i = 0; i + 1 < spec.layer_dims.size(); ++i) {
    const std::size_t in = spec.layer_dims[i];
    const std::size_t out = spec.layer_dims[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Layer lin;
    lin.kind = LayerKind::linear;
    lin.weight = Mat(out, in);
    for (double& w : lin.weight.values()) w = (2.0 * rng.uniform() - 1.0) * bound;
    lin.bias.resize(out);
    for (double& b : lin.bias) b = (2.0 * rng.uniform() - 1.0) * bound;
    net.layers.push_back(std::move(lin));
    if (i + 2 < spec.layer_dims.size()) {
      if (spec.standardize_hidden) net.layers.push_back({LayerKind::standardize, {}, {}, 1e-5});
      net.layers.push_back({LayerKind::relu, {}, {}, 0.0});
    }
  }
  if (spec.normalize_output) net.layers.push_back({LayerKind::l2_normalize, {}, {}, 0.0});
  return net;
}

namespace {

Mat linear_forward(const Layer& l, const Mat& x) {
  if (x.cols() != l.weight.cols()) {
    throw DimensionError("linear layer expects " + std::to_string(l.weight.cols()) +
                         " inputs, got " + std::to_string(x.cols()));
  }
  Mat y = matmul_transposed(x, l.weight);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += l.bias[c];
  }
  return y;
}

}  // namespace

Mat forward_network(const Network& net, const Mat& x, NetworkCache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
    cache->aux.clear();
  }
  Mat cur = x;
  for (const auto& layer : net.layers) {
    Mat out;
    Vec aux;
    switch (layer.kind) {
      case LayerKind::linear:
        out = linear_forward(layer, cur);
        break;
      case LayerKind::relu:
        out = cur;
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::standardize: {
        const std::size_t n = cur.rows();
        out = Mat(n, cur.cols());
        aux.resize(cur.cols());
        for (std::size_t c = 0; c < cur.cols(); ++c) {
          double mean = 0.0;
          for (std::size_t r = 0; r < n; ++r) mean += cur(r, c);
          mean /= static_cast<double>(n);
          double var = 0.0;
          for (std::size_t r = 0; r < n; ++r) var += (cur(r, c) - mean) * (cur(r, c) - mean);
          var /= static_cast<double>(n);
          const double inv = 1.0 / std::sqrt(var + layer.eps);
          aux[c] = inv;
          for (std::size_t r = 0; r < n; ++r) out(r, c) = (cur(r, c) - mean) * inv;
        }
        break;
      }
      case LayerKind::l2_normalize: {
        out = Mat(cur.rows(), cur.cols());
        aux.resize(cur.rows());
        for (std::size_t r = 0; r < cur.rows(); ++r) {
          const double n = l2_norm(cur.row(r));
          if (!(n > 0.0)) throw ZeroNormError("l2_normalize layer: zero-norm row");
          aux[r] = n;
          for (std::size_t c = 0; c < cur.cols(); ++c) out(r, c) = cur(r, c) / n;
        }
        break;
      }
    }
    if (cache) {
      cache->inputs.push_back(std::move(cur));
      cache->outputs.push_back(out);
      cache->aux.push_back(std::move(aux));
    }
    cur = std::move(out);
  }
  return cur;
}

Mat backward_network(const Network& net, const NetworkCache& cache, const Mat& grad_out,
                     Network& grads) {
  if (cache.inputs.size() != net.layers.size()) {
    throw StaleCacheError("network cache does not match the network layout");
  }
  Mat g = grad_out;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& layer = net.layers[li];
    const Mat& x = cache.inputs[li];
    const Mat& y = cache.outputs[li];
    if (g.rows() != y.rows() || g.cols() != y.cols()) {
      throw DimensionError("backward: gradient shape does not match layer output");
    }
    Mat gin(x.rows(), x.cols());
    switch (layer.kind) {
      case LayerKind::linear: {
        Layer& gl = grads.layers[li];
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto gr = g.row(r);
          auto xr = x.row(r);
          for (std::size_t o = 0; o < gr.size(); ++o) {
            const double go = gr[o];
            if (go == 0.0) continue;
            gl.bias[o] += go;
            auto wrow = gl.weight.row(o);
            for (std::size_t i = 0; i < xr.size(); ++i) wrow[i] += go * xr[i];
          }
        }
        gin = matmul(g, layer.weight);
        break;
      }
      case LayerKind::relu:
        for (std::size_t k = 0; k < gin.values().size(); ++k) {
          gin.values()[k] = x.values()[k] > 0.0 ? g.values()[k] : 0.0;
        }
        break;
      case LayerKind::standardize: {
        const auto& inv = cache.aux[li];
        const double n = static_cast<double>(g.rows());
        for (std::size_t c = 0; c < g.cols(); ++c) {
          double mean_g = 0.0;
          double mean_gx = 0.0;
          for (std::size_t r = 0; r < g.rows(); ++r) {
            mean_g += g(r, c);
            mean_gx += g(r, c) * y(r, c);
          }
          mean_g /= n;
          mean_gx /= n;
          for (std::size_t r = 0; r < g.rows(); ++r) {
            gin(r, c) = inv[c] * (g(r, c) - mean_g - y(r, c) * mean_gx);
          }
        }
        break;
      }
      case LayerKind::l2_normalize: {
        const auto& norms = cache.aux[li];
        for (std::size_t r = 0; r < g.rows(); ++r) {
          const double proj = dot(g.row(r), y.row(r));
          for (std::size_t c = 0; c < g.cols(); ++c) {
            gin(r, c) = (g(r, c) - y(r, c) * proj) / norms[r];
          }
        }
        break;
      }
    }
    g = std::move(gin);
  }
  return g;
}

ModelParams build_model(const ModelSpec& spec, Rng& rng) {
  ModelParams p;
  p.encoder = build_network(spec.encoder, rng);
  if (p.encoder.empty()) throw ConfigError("ModelSpec: encoder must have at least one layer");
  p.projector = build_network(spec.projector, rng);
  p.head = build_network(spec.head, rng);
  return p;
}

ForwardResult forward(const ModelParams& params, const Mat& x) {
  ForwardResult res;
  res.cache.version = params.version;
  res.cache.batch = x.rows();
  res.y = forward_network(params.encoder, x, &res.cache.encoder);
  Mat p = forward_network(params.projector, res.y, &res.cache.projector);
  res.z = forward_network(params.head, p, &res.cache.head);
  return res;
}

Mat encode(const ModelParams& params, const Mat& x) {
  return forward_network(params.encoder, x, nullptr);
}

namespace {

Network zeros_like(const Network& net) {
  Network out = net;
  for (auto& l : out.layers) {
    std::fill(l.weight.values().begin(), l.weight.values().end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return out;
}

}  // namespace

ModelParams zeros_like(const ModelParams& params) {
  ModelParams g;
  g.encoder = zeros_like(params.encoder);
  g.projector = zeros_like(params.projector);
  g.head = zeros_like(params.head);
  return g;
}

void backward_accumulate(const ModelParams& params, const ForwardCache& cache, const Mat& grad_z,
                         const Mat& grad_y, ModelParams& grads) {
  if (cache.version != params.version) {
    throw StaleCacheError("forward cache was produced by an older parameter version");
  }
  Mat g = backward_network(params.head, cache.head, grad_z, grads.head);
  g = backward_network(params.projector, cache.projector, g, grads.projector);
  if (!grad_y.empty()) {
    if (grad_y.rows() != g.rows() || grad_y.cols() != g.cols()) {
      throw DimensionError("backward: grad_y shape mismatch");
    }
    for (std::size_t k = 0; k < g.values().size(); ++k) g.values()[k] += grad_y.values()[k];
  }
  backward_network(params.encoder, cache.encoder, g, grads.encoder);
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache, const Mat& grad_z,
                     const Mat& grad_y) {
  ModelParams grads = zeros_like(params);
  backward_accumulate(params, cache, grad_z, grad_y, grads);
  return grads;
}

namespace {

template <typename P, typename S>
void collect(P& net, std::vector<S>& out) {
  for (auto& l : net.layers) {
    if (l.kind != LayerKind::linear) continue;
    out.emplace_back(l.weight.values());
    out.emplace_back(l.bias);
  }
}

}  // namespace

std::vector<std::span<double>> parameter_spans(ModelParams& params) {
  std::vector<std::span<double>> out;
  collect(params.encoder, out);
  collect(params.projector, out);
  collect(params.head, out);
  return out;
}

std::vector<std::span<const double>> parameter_spans(const ModelParams& params) {
  std::vector<std::span<const double>> out;
  collect(params.encoder, out);
  collect(params.projector, out);
  collect(params.head, out);
  return out;
}

void ema_update(TeacherParams& teacher, const ModelParams& student, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw InvalidArgument("ema_update: m must lie in [0, 1]");
  auto t = parameter_spans(teacher.model);
  auto s = parameter_spans(student);
  if (t.size() != s.size()) throw DimensionError("ema_update: teacher/student layout mismatch");
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k].size() != s[k].size()) throw DimensionError("ema_update: tensor size mismatch");
    for (std::size_t i = 0; i < t[k].size(); ++i) t[k][i] = m * t[k][i] + (1.0 - m) * s[k][i];
  }
  teacher.model.touch();
}

ModelParams average_checkpoints(std::span<const ModelParams> checkpoints) {
  if (checkpoints.empty()) throw EmptyInputError("average_checkpoints: empty list");
  ModelParams avg = zeros_like(checkpoints.front());
  auto dst = parameter_spans(avg);
  for (const auto& ck : checkpoints) {
    auto src = parameter_spans(ck);
    if (src.size() != dst.size()) throw DimensionError("average_checkpoints: layout mismatch");
    for (std::size_t k = 0; k < dst.size(); ++k) {
      if (src[k].size() != dst[k].size()) throw DimensionError("average_checkpoints: shape mismatch");
      for (std::size_t i = 0; i < dst[k].size(); ++i) dst[k][i] += src[k][i];
    }
  }
  const double n = static_cast<double>(checkpoints.size());
  for (auto s : dst)
    for (double& v : s) v /= n;
  return avg;
}

double global_grad_norm(const ModelParams& grads) {
  double acc = 0.0;
  for (auto s : parameter_spans(grads))
    for (double v : s) acc += v * v;
  return std::sqrt(acc);
}

void scale_grads(ModelParams& grads, double factor) {
  for (auto s : parameter_spans(grads))
    for (double& v : s) v *= factor;
}

Mat instance_normalize(const Mat& x, double eps) {
  Mat out(x.rows(), x.cols());
  const double d = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < row.size(); ++c) out(r, c) = (row[c] - mean) * inv;
  }
  return out;
}

// ---- checkpoint I/O -------------------------------------------------------

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'S', 'P', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put_le(std::ostream& os, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw IoError("checkpoint: unexpected end of file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

void write_network(std::ostream& os, const Network& net) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(l.kind));
    put_le<double>(os, l.eps);
    if (l.kind != LayerKind::linear) continue;
    put_le<std::uint64_t>(os, l.weight.rows());
    put_le<std::uint64_t>(os, l.weight.cols());
    for (double w : l.weight.values()) put_le<double>(os, w);
    for (double b : l.bias) put_le<double>(os, b);
  }
}

Network read_network(std::istream& is) {
  Network net;
  const auto n_layers = get_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    Layer l;
    const auto kind = get_le<std::uint8_t>(is);
    if (kind < 1 || kind > 4) throw IoError("checkpoint: unknown layer kind " + std::to_string(kind));
    l.kind = static_cast<LayerKind>(kind);
    l.eps = get_le<double>(is);
    if (l.kind == LayerKind::linear) {
      const auto rows = get_le<std::uint64_t>(is);
      const auto cols = get_le<std::uint64_t>(is);
      if (rows == 0 || cols == 0 || rows * cols > (1ULL << 32)) throw IoError("checkpoint: bad tensor shape");
      l.weight = Mat(rows, cols);
      for (double& w : l.weight.values()) w = get_le<double>(is);
      l.bias.resize(rows);
      for (double& b : l.bias) b = get_le<double>(is);
    }
    net.layers.push_back(std::move(l));
  }
  return net;
}

}  // namespace

void save_checkpoint(std::ostream& os, const ModelParams& params) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kFormatVersion);
  write_network(os, params.encoder);
  write_network(os, params.projector);
  write_network(os, params.head);
  if (!os) throw IoError("checkpoint: write failed");
}

ModelParams load_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError("checkpoint: bad magic");
  }
  const auto version = get_le<std::uint32_t>(is);
  if (version != kFormatVersion) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  }
  ModelParams p;
  p.encoder = read_network(is);
  p.projector = read_network(is);
  p.head = read_network(is);
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  save_checkpoint(os, params);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return load_checkpoint(is);
}

}  // namespace ssps
