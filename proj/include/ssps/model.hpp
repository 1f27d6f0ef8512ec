#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "ssps/core_math.hpp"

namespace ssps {

enum class LayerKind : std::uint8_t {
  linear = 1,
  relu = 2,
  standardize = 3,  // per-batch feature standardization, no affine
  l2_normalize = 4,
};

struct Layer {
  LayerKind kind = LayerKind::linear;
  Mat weight;  // out x in, linear only
  Vec bias;    // out, linear only
  double eps = 1e-5;

  bool operator==(const Layer&) const = default;
};

// A sequential stack of layers. An empty network is the identity map.
struct Network {
  std::vector<Layer> layers;

  bool empty() const noexcept { return layers.empty(); }
  std::size_t parameter_count() const;
  bool operator==(const Network&) const = default;
};

enum class Activation { relu };

// layer_dims = {in, hidden..., out}. Hidden layers are Linear[->Standardize]->ReLU;
// the last Linear is bare, optionally followed by l2 normalization.
struct MlpSpec {
  std::vector<std::size_t> layer_dims;
  Activation activation = Activation::relu;
  bool normalize_output = false;
  bool standardize_hidden = false;
};

Network build_network(const MlpSpec& spec, Rng& rng);

struct NetworkCache {
  std::vector<Mat> inputs;  // input of each layer
  std::vector<Mat> outputs;  // output of each layer
  std::vector<Vec> aux;  // inverse std (standardize) or row norms (l2)
};

Mat forward_network(const Network& net, const Mat& x, NetworkCache* cache = nullptr);

// Accumulates parameter gradients into `grads` (same structure as `net`) and
// returns the gradient with respect to the network input.
Mat backward_network(const Network& net, const NetworkCache& cache, const Mat& grad_out,
                     Network& grads);

// Encoder f and projector g (plus an optional head after g). Empty projector
// and head make the embedding alias the representation.
struct ModelParams {
  Network encoder;
  Network projector;
  Network head;
  // Bumped by every in-place parameter mutation; forward caches remember it.
  std::uint64_t version = 0;

  void touch() noexcept { ++version; }
  std::size_t parameter_count() const;
  bool same_weights(const ModelParams& other) const;
};

struct TeacherParams {
  ModelParams model;
};

struct ModelSpec {
  MlpSpec encoder;
  MlpSpec projector;  // empty layer_dims => no projector
  MlpSpec head;       // empty layer_dims => no head
};

ModelParams build_model(const ModelSpec& spec, Rng& rng);

struct ForwardCache {
  NetworkCache encoder;
  NetworkCache projector;
  NetworkCache head;
  std::uint64_t version = 0;
  std::size_t batch = 0;
};

struct ForwardResult {
  Mat y;  // representations
  Mat z;  // embeddings
  ForwardCache cache;
};

ForwardResult forward(const ModelParams& params, const Mat& x);
// Encoder only; no cache.
Mat encode(const ModelParams& params, const Mat& x);

// Gradients with the same structure as `params` (weights set to zero except
// for accumulated values). grad_y may be empty (treated as zero).
ModelParams zeros_like(const ModelParams& params);
void backward_accumulate(const ModelParams& params, const ForwardCache& cache, const Mat& grad_z,
                         const Mat& grad_y, ModelParams& grads);
ModelParams backward(const ModelParams& params, const ForwardCache& cache, const Mat& grad_z,
                     const Mat& grad_y);

// Flat views over every trainable tensor, in a fixed order.
std::vector<std::span<double>> parameter_spans(ModelParams& params);
std::vector<std::span<const double>> parameter_spans(const ModelParams& params);

// teacher <- m * teacher + (1 - m) * student
void ema_update(TeacherParams& teacher, const ModelParams& student, double m);

ModelParams average_checkpoints(std::span<const ModelParams> checkpoints);

double global_grad_norm(const ModelParams& grads);
void scale_grads(ModelParams& grads, double factor);

// Per-row standardization of raw input features (instance normalization).
Mat instance_normalize(const Mat& x, double eps = 1e-5);

// Binary checkpoint, see README for the layout.
void save_checkpoint(std::ostream& os, const ModelParams& params);
ModelParams load_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ssps
