#include "ekr/neural.hpp"

#include "ekr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ekr {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void fill_glorot(Tensor& t, Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = glorot_limit(fan_in, fan_out);
  for (double& v : t.data) v = rng.uniform(-limit, limit);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  data.assign(shape_product(shape), 0.0);
}

void Layer::zero_grads() {
  for (Tensor* g : grads()) std::fill(g->data.begin(), g->data.end(), 0.0);
}

DenseLayer::DenseLayer(std::size_t in, std::size_t out, std::string label)
    : in_(in), out_(out), label_(std::move(label)),
      weight_({in, out}), bias_({out}), dweight_({in, out}), dbias_({out}) {
  if (in == 0 || out == 0) throw data_error(label_ + " layer needs positive dimensions");
}

std::string DenseLayer::spec_line() const {
  return label_ + " " + std::to_string(in_) + " " + std::to_string(out_);
}

Tensor DenseLayer::forward(const Tensor& x) {
  if (x.shape.size() != 2 || x.shape[1] != in_) {
    throw data_error(label_ + " forward: expected [batch, " + std::to_string(in_) + "] input");
  }
  input_ = x;
  const std::size_t batch = x.shape[0];
  Tensor y({batch, out_});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = &x.data[b * in_];
    double* yr = &y.data[b * out_];
    for (std::size_t d = 0; d < out_; ++d) yr[d] = bias_[d];
    for (std::size_t i = 0; i < in_; ++i) {
      const double xv = xr[i];
      const double* wr = &weight_.data[i * out_];
      for (std::size_t d = 0; d < out_; ++d) yr[d] += xv * wr[d];
    }
  }
  return y;
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
  const std::size_t batch = input_.shape[0];
  if (grad_out.shape.size() != 2 || grad_out.shape[0] != batch || grad_out.shape[1] != out_) {
    throw data_error(label_ + " backward: gradient shape mismatch");
  }
  Tensor dx({batch, in_});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = &input_.data[b * in_];
    const double* gr = &grad_out.data[b * out_];
    double* dxr = &dx.data[b * in_];
    for (std::size_t d = 0; d < out_; ++d) dbias_[d] += gr[d];
    for (std::size_t i = 0; i < in_; ++i) {
      const double xv = xr[i];
      double* dwr = &dweight_.data[i * out_];
      const double* wr = &weight_.data[i * out_];
      double acc = 0.0;
      for (std::size_t d = 0; d < out_; ++d) {
        dwr[d] += xv * gr[d];
        acc += wr[d] * gr[d];
      }
      dxr[i] = acc;
    }
  }
  return dx;
}

void DenseLayer::init_params(Rng& rng) {
  fill_glorot(weight_, rng, in_, out_);
  std::fill(bias_.data.begin(), bias_.data.end(), 0.0);
}

Tensor ReluLayer::forward(const Tensor& x) {
  input_ = x;
  Tensor y = x;
  for (double& v : y.data) v = std::max(0.0, v);
  return y;
}

Tensor ReluLayer::backward(const Tensor& grad_out) {
  if (grad_out.size() != input_.size()) throw data_error("relu backward: shape mismatch");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (input_[i] <= 0.0) dx[i] = 0.0;
  }
  return dx;
}

Conv1dLayer::Conv1dLayer(std::size_t in_maps, std::size_t out_maps, std::size_t kernel)
    : in_maps_(in_maps), out_maps_(out_maps), kernel_(kernel),
      weight_({out_maps, in_maps, kernel}), bias_({out_maps}),
      dweight_({out_maps, in_maps, kernel}), dbias_({out_maps}) {
  if (in_maps == 0 || out_maps == 0 || kernel == 0) {
    throw data_error("conv1d layer needs positive dimensions");
  }
}

std::string Conv1dLayer::spec_line() const {
  return "conv1d " + std::to_string(in_maps_) + " " + std::to_string(out_maps_) + " " +
         std::to_string(kernel_);
}

Tensor Conv1dLayer::forward(const Tensor& x) {
  if (x.shape.size() != 3 || x.shape[1] != in_maps_) {
    throw data_error("conv1d forward: expected [batch, " + std::to_string(in_maps_) +
                     ", length] input");
  }
  const std::size_t len = x.shape[2];
  if (len < kernel_) {
    throw data_error("conv1d forward: input length " + std::to_string(len) +
                     " shorter than kernel " + std::to_string(kernel_));
  }
  input_ = x;
  const std::size_t batch = x.shape[0];
  const std::size_t out_len = len - kernel_ + 1;
  Tensor y({batch, out_maps_, out_len});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out_maps_; ++o) {
      double* yr = &y.data[(b * out_maps_ + o) * out_len];
      for (std::size_t t = 0; t < out_len; ++t) yr[t] = bias_[o];
      for (std::size_t i = 0; i < in_maps_; ++i) {
        const double* xr = &x.data[(b * in_maps_ + i) * len];
        const double* wr = &weight_.data[(o * in_maps_ + i) * kernel_];
        for (std::size_t t = 0; t < out_len; ++t) {
          double acc = 0.0;
          for (std::size_t k = 0; k < kernel_; ++k) acc += wr[k] * xr[t + k];
          yr[t] += acc;
        }
      }
    }
  }
  return y;
}

Tensor Conv1dLayer::backward(const Tensor& grad_out) {
  const std::size_t batch = input_.shape[0];
  const std::size_t len = input_.shape[2];
  const std::size_t out_len = len - kernel_ + 1;
  if (grad_out.shape.size() != 3 || grad_out.shape[0] != batch ||
      grad_out.shape[1] != out_maps_ || grad_out.shape[2] != out_len) {
    throw data_error("conv1d backward: gradient shape mismatch");
  }
  Tensor dx(input_.shape);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out_maps_; ++o) {
      const double* gr = &grad_out.data[(b * out_maps_ + o) * out_len];
      for (std::size_t t = 0; t < out_len; ++t) dbias_[o] += gr[t];
      for (std::size_t i = 0; i < in_maps_; ++i) {
        const double* xr = &input_.data[(b * in_maps_ + i) * len];
        double* dxr = &dx.data[(b * in_maps_ + i) * len];
        double* dwr = &dweight_.data[(o * in_maps_ + i) * kernel_];
        const double* wr = &weight_.data[(o * in_maps_ + i) * kernel_];
        for (std::size_t t = 0; t < out_len; ++t) {
          const double g = gr[t];
          for (std::size_t k = 0; k < kernel_; ++k) {
            dwr[k] += g * xr[t + k];
            dxr[t + k] += g * wr[k];
          }
        }
      }
    }
  }
  return dx;
}

void Conv1dLayer::init_params(Rng& rng) {
  fill_glorot(weight_, rng, in_maps_ * kernel_, out_maps_ * kernel_);
  std::fill(bias_.data.begin(), bias_.data.end(), 0.0);
}

MaxPool1dLayer::MaxPool1dLayer(std::size_t width) : width_(width) {
  if (width < 1) throw data_error("maxpool1d width must be at least 1");
}

std::string MaxPool1dLayer::spec_line() const { return "maxpool1d " + std::to_string(width_); }

Tensor MaxPool1dLayer::forward(const Tensor& x) {
  if (x.shape.size() != 3) throw data_error("maxpool1d forward: expected [batch, maps, length]");
  const std::size_t len = x.shape[2];
  if (len < width_) {
    throw data_error("maxpool1d forward: length " + std::to_string(len) +
                     " shorter than window " + std::to_string(width_));
  }
  in_shape_ = x.shape;
  const std::size_t out_len = len / width_;
  const std::size_t rows = x.shape[0] * x.shape[1];
  Tensor y({x.shape[0], x.shape[1], out_len});
  argmax_.assign(rows * out_len, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x.data[r * len];
    double* yr = &y.data[r * out_len];
    for (std::size_t t = 0; t < out_len; ++t) {
      std::size_t best = t * width_;
      double value = xr[best];
      for (std::size_t k = 1; k < width_; ++k) {
        const std::size_t idx = t * width_ + k;
        if (xr[idx] > value) {
          value = xr[idx];
          best = idx;
        }
      }
      yr[t] = value;
      argmax_[r * out_len + t] = best;
    }
  }
  return y;
}

Tensor MaxPool1dLayer::backward(const Tensor& grad_out) {
  const std::size_t len = in_shape_[2];
  const std::size_t out_len = len / width_;
  const std::size_t rows = in_shape_[0] * in_shape_[1];
  if (grad_out.shape.size() != 3 || grad_out.shape[0] != in_shape_[0] ||
      grad_out.shape[1] != in_shape_[1] || grad_out.shape[2] != out_len) {
    throw data_error("maxpool1d backward: gradient shape mismatch");
  }
  Tensor dx(in_shape_);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < out_len; ++t) {
      dx.data[r * len + argmax_[r * out_len + t]] += grad_out.data[r * out_len + t];
    }
  }
  return dx;
}

Tensor FlattenLayer::forward(const Tensor& x) {
  if (x.shape.size() < 2) throw data_error("flatten forward: expected rank >= 2");
  in_shape_ = x.shape;
  Tensor y = x;
  y.shape = {x.shape[0], x.size() / x.shape[0]};
  return y;
}

Tensor FlattenLayer::backward(const Tensor& grad_out) {
  if (grad_out.size() != shape_product(in_shape_)) {
    throw data_error("flatten backward: gradient shape mismatch");
  }
  Tensor dx = grad_out;
  dx.shape = in_shape_;
  return dx;
}

LstmLayer::LstmLayer(std::size_t features, std::size_t units)
    : features_(features), units_(units) {
  if (features == 0 || units == 0) throw data_error("lstm layer needs positive dimensions");
  for (int g = 0; g < 4; ++g) {
    w_[g] = Tensor({units, units + features});
    b_[g] = Tensor({units});
    dw_[g] = Tensor({units, units + features});
    db_[g] = Tensor({units});
  }
}

std::string LstmLayer::spec_line() const {
  return "lstm " + std::to_string(features_) + " " + std::to_string(units_);
}

std::vector<Tensor*> LstmLayer::params() {
  return {&w_[0], &b_[0], &w_[1], &b_[1], &w_[2], &b_[2], &w_[3], &b_[3]};
}

std::vector<Tensor*> LstmLayer::grads() {
  return {&dw_[0], &db_[0], &dw_[1], &db_[1], &dw_[2], &db_[2], &dw_[3], &db_[3]};
}

void LstmLayer::init_params(Rng& rng) {
  for (int g = 0; g < 4; ++g) {
    fill_glorot(w_[g], rng, units_ + features_, units_);
    std::fill(b_[g].data.begin(), b_[g].data.end(), 0.0);
  }
}

Tensor LstmLayer::forward(const Tensor& x) {
  if (x.shape.size() != 3 || x.shape[2] != features_) {
    throw data_error("lstm forward: expected [batch, seq, " + std::to_string(features_) + "]");
  }
  input_ = x;
  batch_ = x.shape[0];
  seq_ = x.shape[1];
  const std::size_t u = units_;
  const std::size_t cat = units_ + features_;
  gate_i_.assign(batch_ * seq_ * u, 0.0);
  gate_m_.assign(batch_ * seq_ * u, 0.0);
  gate_o_.assign(batch_ * seq_ * u, 0.0);
  cand_.assign(batch_ * seq_ * u, 0.0);
  cell_.assign(batch_ * (seq_ + 1) * u, 0.0);
  hidden_.assign(batch_ * (seq_ + 1) * u, 0.0);

  Tensor out({batch_, u});
  std::vector<double> z(4);
  for (std::size_t b = 0; b < batch_; ++b) {
    for (std::size_t e = 0; e < seq_; ++e) {
      const double* xr = &x.data[(b * seq_ + e) * features_];
      const double* h_prev = &hidden_[(b * (seq_ + 1) + e) * u];
      const double* c_prev = &cell_[(b * (seq_ + 1) + e) * u];
      double* h_cur = &hidden_[(b * (seq_ + 1) + e + 1) * u];
      double* c_cur = &cell_[(b * (seq_ + 1) + e + 1) * u];
      const std::size_t step = (b * seq_ + e) * u;
      for (std::size_t d = 0; d < u; ++d) {
        for (int g = 0; g < 4; ++g) {
          const double* wr = &w_[g].data[d * cat];
          double acc = b_[g][d];
          for (std::size_t j = 0; j < u; ++j) acc += wr[j] * h_prev[j];
          for (std::size_t j = 0; j < features_; ++j) acc += wr[u + j] * xr[j];
          z[g] = acc;
        }
        const double gi = sigmoid(z[0]);
        const double gm = sigmoid(z[1]);
        const double go = sigmoid(z[2]);
        const double gc = std::tanh(z[3]);
        gate_i_[step + d] = gi;
        gate_m_[step + d] = gm;
        gate_o_[step + d] = go;
        cand_[step + d] = gc;
        c_cur[d] = gi * gc + gm * c_prev[d];
        h_cur[d] = go * std::tanh(c_cur[d]);
      }
    }
    const double* h_last = &hidden_[(b * (seq_ + 1) + seq_) * u];
    for (std::size_t d = 0; d < u; ++d) out.data[b * u + d] = h_last[d];
  }
  return out;
}

Tensor LstmLayer::backward(const Tensor& grad_out) {
  const std::size_t u = units_;
  const std::size_t cat = units_ + features_;
  if (grad_out.shape.size() != 2 || grad_out.shape[0] != batch_ || grad_out.shape[1] != u) {
    throw data_error("lstm backward: gradient shape mismatch");
  }
  Tensor dx({batch_, seq_, features_});
  std::vector<double> dh(u), dc(u), dh_prev(u), dz(4);
  for (std::size_t b = 0; b < batch_; ++b) {
    for (std::size_t d = 0; d < u; ++d) dh[d] = grad_out.data[b * u + d];
    std::fill(dc.begin(), dc.end(), 0.0);
    for (std::size_t e = seq_; e-- > 0;) {
      const std::size_t step = (b * seq_ + e) * u;
      const double* xr = &input_.data[(b * seq_ + e) * features_];
      const double* h_prev = &hidden_[(b * (seq_ + 1) + e) * u];
      const double* c_prev = &cell_[(b * (seq_ + 1) + e) * u];
      const double* c_cur = &cell_[(b * (seq_ + 1) + e + 1) * u];
      double* dxr = &dx.data[(b * seq_ + e) * features_];
      std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
      for (std::size_t d = 0; d < u; ++d) {
        const double gi = gate_i_[step + d];
        const double gm = gate_m_[step + d];
        const double go = gate_o_[step + d];
        const double gc = cand_[step + d];
        const double tc = std::tanh(c_cur[d]);
        const double dcd = dc[d] + dh[d] * go * (1.0 - tc * tc);
        dz[0] = dcd * gc * gi * (1.0 - gi);
        dz[1] = dcd * c_prev[d] * gm * (1.0 - gm);
        dz[2] = dh[d] * tc * go * (1.0 - go);
        dz[3] = dcd * gi * (1.0 - gc * gc);
        dc[d] = dcd * gm;
        for (int g = 0; g < 4; ++g) {
          const double gd = dz[g];
          db_[g][d] += gd;
          double* dwr = &dw_[g].data[d * cat];
          const double* wr = &w_[g].data[d * cat];
          for (std::size_t j = 0; j < u; ++j) {
            dwr[j] += gd * h_prev[j];
            dh_prev[j] += gd * wr[j];
          }
          for (std::size_t j = 0; j < features_; ++j) {
            dwr[u + j] += gd * xr[j];
            dxr[j] += gd * wr[u + j];
          }
        }
      }
      dh = dh_prev;
    }
  }
  return dx;
}

void ModelGraph::add(std::unique_ptr<Layer> layer) {
  if (dynamic_cast<LstmLayer*>(layer.get()) != nullptr) {
    if (lstm_index_ >= 0) throw data_error("model graph supports a single lstm stage");
    lstm_index_ = static_cast<int>(layers_.size());
  }
  layers_.push_back(std::move(layer));
}

Tensor ModelGraph::forward(const Tensor& x) {
  if (layers_.empty()) throw data_error("model graph is empty");
  if (lstm_index_ < 0) {
    Tensor cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur);
    return cur;
  }
  if (x.shape.size() < 3) {
    throw data_error("model graph with lstm expects [batch, seq, ...frame] input");
  }
  const std::size_t batch = x.shape[0];
  const std::size_t seq = x.shape[1];
  Tensor cur = x;
  cur.shape.erase(cur.shape.begin());
  cur.shape[0] = batch * seq;
  pre_lstm_shape_ = x.shape;
  for (int i = 0; i < lstm_index_; ++i) cur = layers_[static_cast<std::size_t>(i)]->forward(cur);
  if (cur.shape.size() != 2) {
    throw data_error("stages before the lstm must flatten each frame to a vector");
  }
  cur.shape = {batch, seq, cur.shape[1]};
  for (std::size_t i = static_cast<std::size_t>(lstm_index_); i < layers_.size(); ++i) {
    cur = layers_[i]->forward(cur);
  }
  return cur;
}

void ModelGraph::backward(const Tensor& grad_out) {
  if (lstm_index_ < 0) {
    Tensor g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
    return;
  }
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > static_cast<std::size_t>(lstm_index_);) {
    g = layers_[i]->backward(g);
  }
  // g is now [batch, seq, features]; collapse to frames for the per-frame
  // stages.
  g.shape = {g.shape[0] * g.shape[1], g.shape[2]};
  for (std::size_t i = static_cast<std::size_t>(lstm_index_); i-- > 0;) {
    g = layers_[i]->backward(g);
  }
}

std::vector<Tensor*> ModelGraph::params() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    for (Tensor* p : layer->params()) out.push_back(p);
  }
  return out;
}

std::vector<Tensor*> ModelGraph::grads() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    for (Tensor* g : layer->grads()) out.push_back(g);
  }
  return out;
}

void ModelGraph::zero_grads() {
  for (auto& layer : layers_) layer->zero_grads();
}

void ModelGraph::init_params(Rng& rng) {
  for (auto& layer : layers_) layer->init_params(rng);
}

std::vector<std::string> ModelGraph::spec_lines() const {
  std::vector<std::string> out;
  for (const auto& layer : layers_) out.push_back(layer->spec_line());
  return out;
}

Adam::Adam(std::vector<Tensor*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (Tensor* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step(const std::vector<Tensor*>& grads) {
  if (grads.size() != params_.size()) throw data_error("adam: gradient list shape mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& theta = *params_[p];
    const Tensor& g = *grads[p];
    if (g.size() != theta.size()) throw data_error("adam: gradient tensor shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double& m = m_[p][i];
      double& v = v_[p][i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g[i];
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.size() != target.size()) throw data_error("mse: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

namespace {

Tensor gather_batch(const Tensor& x, const std::vector<std::size_t>& indices,
                    std::size_t begin, std::size_t end) {
  const std::size_t n = x.shape[0];
  const std::size_t stride = x.size() / n;
  std::vector<std::size_t> shape = x.shape;
  shape[0] = end - begin;
  Tensor out(shape);
  for (std::size_t i = begin; i < end; ++i) {
    const double* src = &x.data[indices[i] * stride];
    std::copy(src, src + stride, &out.data[(i - begin) * stride]);
  }
  return out;
}

double evaluate_loss(ModelGraph& model, const Tensor& x, const Tensor& y,
                     std::size_t batch_size) {
  const std::size_t n = x.shape[0];
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  double sse = 0.0;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(n, begin + batch_size);
    const Tensor xb = gather_batch(x, identity, begin, end);
    const Tensor yb = gather_batch(y, identity, begin, end);
    const Tensor pred = model.forward(xb);
    sse += mse_loss(pred, yb) * static_cast<double>(pred.size());
  }
  return sse / static_cast<double>(y.size());
}

} // namespace

TrainHistory train(ModelGraph& model, const Tensor& x, const Tensor& y,
                   const Tensor& x_val, const Tensor& y_val, const TrainConfig& cfg) {
  if (x.shape.empty() || x.shape[0] == 0) throw data_error("train: empty training set");
  const std::size_t n = x.shape[0];
  if (y.shape.size() != 2 || y.shape[0] != n || y.shape[1] != 3) {
    throw data_error("train: targets must be [n, 3]");
  }
  if (cfg.batch_size < 1) throw data_error("train: batch_size must be at least 1");
  const bool has_val = !x_val.shape.empty() && x_val.shape[0] > 0;

  Rng rng(cfg.seed);
  Adam adam(model.params(), cfg.adam);
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);

  TrainHistory history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(indices);
    double sse = 0.0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const Tensor xb = gather_batch(x, indices, begin, end);
      const Tensor yb = gather_batch(y, indices, begin, end);
      const Tensor pred = model.forward(xb);
      const double batch_mse = mse_loss(pred, yb);
      if (!std::isfinite(batch_mse)) {
        throw numeric_error("train: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      sse += batch_mse * static_cast<double>(pred.size());

      Tensor grad = pred;
      const double scale = 2.0 / static_cast<double>(pred.size());
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = scale * (pred[i] - yb[i]);
      model.zero_grads();
      model.backward(grad);
      adam.step(model.grads());
    }
    history.train_loss.push_back(sse / static_cast<double>(y.size()));
    if (has_val) {
      const double vl = evaluate_loss(model, x_val, y_val, cfg.batch_size);
      if (!std::isfinite(vl)) {
        throw numeric_error("train: non-finite validation loss at epoch " +
                            std::to_string(epoch + 1));
      }
      history.val_loss.push_back(vl);
    }
  }
  return history;
}

ModelGraph build_mlp(std::size_t input_dim) {
  ModelGraph g;
  g.add(std::make_unique<DenseLayer>(input_dim, 300));
  g.add(std::make_unique<ReluLayer>());
  g.add(std::make_unique<DenseLayer>(300, 100));
  g.add(std::make_unique<ReluLayer>());
  g.add(std::make_unique<DenseLayer>(100, 50));
  g.add(std::make_unique<ReluLayer>());
  g.add(std::make_unique<DenseLayer>(50, 3, "linear"));
  return g;
}

std::size_t cnn_feature_dim(std::size_t frame_len) {
  if (frame_len < 15) {
    throw data_error("cnn frame length " + std::to_string(frame_len) +
                     " too short for the 15-tap kernel");
  }
  const std::size_t l1 = frame_len - 15 + 1;
  const std::size_t l2 = l1 / 2;
  if (l2 < 7) {
    throw data_error("cnn frame length " + std::to_string(frame_len) +
                     " too short for the 7-tap kernel after pooling");
  }
  return 32 * (l2 - 7 + 1);
}

ModelGraph build_cnn_lstm(std::size_t channels, std::size_t frame_len, std::size_t seq_len) {
  if (channels == 0) throw data_error("build_cnn_lstm: channels must be positive");
  if (seq_len == 0) throw data_error("build_cnn_lstm: seq_len must be positive");
  const std::size_t features = cnn_feature_dim(frame_len);
  ModelGraph g;
  g.add(std::make_unique<Conv1dLayer>(channels, 64, 15));
  g.add(std::make_unique<ReluLayer>());
  g.add(std::make_unique<MaxPool1dLayer>(2));
  g.add(std::make_unique<Conv1dLayer>(64, 32, 7));
  g.add(std::make_unique<ReluLayer>());
  g.add(std::make_unique<FlattenLayer>());
  g.add(std::make_unique<LstmLayer>(features, 50));
  g.add(std::make_unique<DenseLayer>(50, 3, "linear"));
  return g;
}

namespace {

std::unique_ptr<Layer> layer_from_spec(const std::string& line, const std::string& context) {
  std::istringstream iss(line);
  std::string kind;
  iss >> kind;
  auto read_size = [&](const char* what) {
    long long v = -1;
    if (!(iss >> v) || v < 0) {
      throw data_error(context + ": layer line '" + line + "' missing " + what);
    }
    return static_cast<std::size_t>(v);
  };
  if (kind == "dense" || kind == "linear") {
    const std::size_t in = read_size("input dim");
    const std::size_t out = read_size("output dim");
    return std::make_unique<DenseLayer>(in, out, kind);
  }
  if (kind == "relu") return std::make_unique<ReluLayer>();
  if (kind == "conv1d") {
    const std::size_t in = read_size("input maps");
    const std::size_t out = read_size("output maps");
    const std::size_t k = read_size("kernel");
    return std::make_unique<Conv1dLayer>(in, out, k);
  }
  if (kind == "maxpool1d") return std::make_unique<MaxPool1dLayer>(read_size("width"));
  if (kind == "flatten") return std::make_unique<FlattenLayer>();
  if (kind == "lstm") {
    const std::size_t features = read_size("features");
    const std::size_t units = read_size("units");
    return std::make_unique<LstmLayer>(features, units);
  }
  throw data_error(context + ": unknown layer kind '" + kind + "'");
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

std::vector<std::size_t> shape_from_string(const std::string& text, const std::string& context) {
  std::vector<std::size_t> shape;
  for (const std::string& part : split(text, 'x')) {
    shape.push_back(static_cast<std::size_t>(parse_int(part, context)));
  }
  return shape;
}

} // namespace

void save_checkpoint(ModelGraph& model, const std::string& arch,
                     const std::vector<std::size_t>& input_shape, std::uint64_t seed,
                     std::size_t epoch, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write checkpoint " + path);
  out << "# arch=" << arch << " input=" << shape_to_string(input_shape) << " seed=" << seed
      << " epoch=" << epoch << "\n";
  for (const std::string& line : model.spec_lines()) out << "layer " << line << "\n";
  for (Tensor* p : model.params()) {
    out << "tensor " << p->size();
    for (double v : p->data) out << ' ' << format_double(v);
    out << "\n";
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty checkpoint");
  line = trim(line);
  Checkpoint ckpt;
  {
    if (line.rfind("# arch=", 0) != 0) throw data_error(path + ": malformed checkpoint header");
    std::istringstream iss(line.substr(2));
    std::string tok;
    while (iss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) throw data_error(path + ": malformed header token " + tok);
      const std::string key = tok.substr(0, eq);
      const std::string value = tok.substr(eq + 1);
      if (key == "arch") {
        ckpt.arch = value;
      } else if (key == "input") {
        ckpt.input_shape = shape_from_string(value, path);
      } else if (key == "seed") {
        ckpt.seed = static_cast<std::uint64_t>(parse_int(value, path));
      } else if (key == "epoch") {
        ckpt.epoch = static_cast<std::size_t>(parse_int(value, path));
      } else {
        throw data_error(path + ": unknown header key " + key);
      }
    }
  }
  std::vector<std::string> tensor_lines;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.rfind("layer ", 0) == 0) {
      ckpt.model.add(layer_from_spec(t.substr(6), path));
    } else if (t.rfind("tensor ", 0) == 0) {
      tensor_lines.push_back(t);
    } else {
      throw data_error(path + ": unexpected line '" + t.substr(0, 32) + "'");
    }
  }
  const std::vector<Tensor*> params = ckpt.model.params();
  if (tensor_lines.size() != params.size()) {
    throw data_error(path + ": checkpoint holds " + std::to_string(tensor_lines.size()) +
                     " tensors, architecture needs " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::istringstream iss(tensor_lines[i].substr(7));
    std::size_t count = 0;
    iss >> count;
    if (count != params[i]->size()) {
      throw data_error(path + ": tensor " + std::to_string(i) + " holds " +
                       std::to_string(count) + " values, expected " +
                       std::to_string(params[i]->size()));
    }
    std::string value;
    for (std::size_t j = 0; j < count; ++j) {
      if (!(iss >> value)) throw data_error(path + ": tensor " + std::to_string(i) + " truncated");
      params[i]->data[j] = parse_double(value, path);
    }
  }
  return ckpt;
}

} // namespace ekr
