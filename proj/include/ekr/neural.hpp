#pragma once

#include "ekr/util.hpp"

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace ekr {

// Dense row-major value holder. The leading axis is always the batch (or
// batch*sequence) dimension inside the engine.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

// One computation stage. forward caches whatever backward needs; backward
// consumes the loss gradient w.r.t. its output, accumulates parameter
// gradients, and returns the gradient w.r.t. its input.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string spec_line() const = 0;
  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Tensor*> params() { return {}; }
  virtual std::vector<Tensor*> grads() { return {}; }
  virtual void init_params(Rng&) {}
  void zero_grads();
};

// Affine map [batch, in] -> [batch, out]. `label` distinguishes hidden
// ("dense") from head ("linear") stages in checkpoints; both compute the
// same thing.
class DenseLayer final : public Layer {
 public:
  DenseLayer(std::size_t in, std::size_t out, std::string label = "dense");
  std::string spec_line() const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Tensor*> params() override { return {&weight_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&dweight_, &dbias_}; }
  void init_params(Rng& rng) override;

 private:
  std::size_t in_, out_;
  std::string label_;
  Tensor weight_, bias_, dweight_, dbias_, input_;
};

class ReluLayer final : public Layer {
 public:
  std::string spec_line() const override { return "relu"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor input_;
};

// Valid-mode correlation [batch, in_maps, len] -> [batch, out_maps,
// len - kernel + 1].
class Conv1dLayer final : public Layer {
 public:
  Conv1dLayer(std::size_t in_maps, std::size_t out_maps, std::size_t kernel);
  std::string spec_line() const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Tensor*> params() override { return {&weight_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&dweight_, &dbias_}; }
  void init_params(Rng& rng) override;

 private:
  std::size_t in_maps_, out_maps_, kernel_;
  Tensor weight_, bias_, dweight_, dbias_, input_;
};

// Non-overlapping window max [batch, maps, len] -> [batch, maps,
// len / width]; remainder samples are dropped. Ties take the first maximum.
class MaxPool1dLayer final : public Layer {
 public:
  explicit MaxPool1dLayer(std::size_t width);
  std::string spec_line() const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::size_t width_;
  std::vector<std::size_t> argmax_;
  std::vector<std::size_t> in_shape_;
};

// [batch, maps, len] -> [batch, maps*len].
class FlattenLayer final : public Layer {
 public:
  std::string spec_line() const override { return "flatten"; }
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<std::size_t> in_shape_;
};

// Single-direction LSTM consuming [batch, seq, features] and emitting the
// final hidden state [batch, units]. Gate order in parameter storage:
// input i, forget m, output o, candidate c; each weight is
// [units, units + features] over the concatenation [h_prev, x].
class LstmLayer final : public Layer {
 public:
  LstmLayer(std::size_t features, std::size_t units);
  std::string spec_line() const override;
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Tensor*> params() override;
  std::vector<Tensor*> grads() override;
  void init_params(Rng& rng) override;

 private:
  std::size_t features_, units_;
  Tensor w_[4], b_[4], dw_[4], db_[4];
  // Per-step caches, each [batch, seq(+1), units] flattened.
  Tensor input_;
  std::vector<double> gate_i_, gate_m_, gate_o_, cand_, cell_, hidden_;
  std::size_t batch_ = 0, seq_ = 0;
};

// Ordered layer list. When an LSTM stage is present the graph expects
// [batch, seq, ...frame] input: the stages before it run per frame, the
// LSTM consumes the per-frame features as a sequence, and the remaining
// stages apply to its final hidden state.
class ModelGraph {
 public:
  ModelGraph() = default;
  ModelGraph(ModelGraph&&) = default;
  ModelGraph& operator=(ModelGraph&&) = default;

  void add(std::unique_ptr<Layer> layer);
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  bool has_lstm() const { return lstm_index_ >= 0; }

  Tensor forward(const Tensor& x);
  // Returns nothing useful to callers; accumulates parameter gradients.
  void backward(const Tensor& grad_out);
  std::vector<Tensor*> params();
  std::vector<Tensor*> grads();
  void zero_grads();
  void init_params(Rng& rng);

  std::vector<std::string> spec_lines() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  int lstm_index_ = -1;
  std::vector<std::size_t> pre_lstm_shape_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamConfig cfg);
  void step(const std::vector<Tensor*>& grads);

 private:
  std::vector<Tensor*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  AdamConfig adam;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
};

// Mini-batch MSE descent with Adam over a seeded shuffle of sample indices.
// x: [n, ...sample shape], y: [n, 3]. The validation pair may be empty, in
// which case val_loss stays empty.
TrainHistory train(ModelGraph& model, const Tensor& x, const Tensor& y,
                   const Tensor& x_val, const Tensor& y_val, const TrainConfig& cfg);

double mse_loss(const Tensor& pred, const Tensor& target);

// Dense(in,300)+ReLU + Dense(300,100)+ReLU + Dense(100,50)+ReLU +
// Linear(50,3).
ModelGraph build_mlp(std::size_t input_dim);

// Conv1d(channels->64, k=15) + ReLU + MaxPool1d(2) + Conv1d(64->32, k=7) +
// ReLU + Flatten per frame, Lstm(50) over seq_len frames, Linear(50,3).
ModelGraph build_cnn_lstm(std::size_t channels, std::size_t frame_len, std::size_t seq_len);

// Flattened-feature length of one CNN frame; throws when the frame is too
// short for the kernels.
std::size_t cnn_feature_dim(std::size_t frame_len);

void save_checkpoint(ModelGraph& model, const std::string& arch,
                     const std::vector<std::size_t>& input_shape, std::uint64_t seed,
                     std::size_t epoch, const std::string& path);

struct Checkpoint {
  ModelGraph model;
  std::string arch;
  std::vector<std::size_t> input_shape;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace ekr
