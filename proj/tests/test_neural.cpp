#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ekr/errors.hpp"
#include "ekr/neural.hpp"
#include "ekr/util.hpp"

#include <cmath>
#include <filesystem>

using namespace ekr;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal();
  return t;
}

double graph_loss(ModelGraph& model, const Tensor& x, const Tensor& y) {
  return mse_loss(model.forward(x), y);
}

// Central-difference check of every parameter gradient against backward().
double max_grad_error(ModelGraph& model, const Tensor& x, const Tensor& y) {
  const Tensor pred = model.forward(x);
  Tensor grad = pred;
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad.data[i] = scale * (pred.data[i] - y.data[i]);
  }
  model.zero_grads();
  model.backward(grad);

  std::vector<std::vector<double>> analytic;
  for (Tensor* g : model.grads()) analytic.push_back(g->data);

  const double h = 1e-5;
  double worst = 0.0;
  const auto params = model.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      const double saved = params[p]->data[i];
      params[p]->data[i] = saved + h;
      const double up = graph_loss(model, x, y);
      params[p]->data[i] = saved - h;
      const double down = graph_loss(model, x, y);
      params[p]->data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      const double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double sigmoid_ref(double z) { return 1.0 / (1.0 + std::exp(-z)); }

} // namespace

TEST_CASE("dense forward is an affine map with an [in, out] weight") {
  DenseLayer layer(2, 3);
  auto params = layer.params();
  Tensor& w = *params[0];
  Tensor& b = *params[1];
  REQUIRE(w.size() == 6);
  // w(i, d) multiplies input i into output d.
  for (std::size_t i = 0; i < 6; ++i) w.data[i] = static_cast<double>(i + 1);
  b.data = {0.5, -0.5, 1.0};
  Tensor x({1, 2});
  x.data = {2.0, 3.0};
  const Tensor y = layer.forward(x);
  REQUIRE(y.shape == std::vector<std::size_t>{1, 3});
  CHECK(y.data[0] == doctest::Approx(2 * 1 + 3 * 4 + 0.5));
  CHECK(y.data[1] == doctest::Approx(2 * 2 + 3 * 5 - 0.5));
  CHECK(y.data[2] == doctest::Approx(2 * 3 + 3 * 6 + 1.0));
}

TEST_CASE("relu clips negatives and gates the gradient") {
  ReluLayer layer;
  Tensor x({1, 4});
  x.data = {-1.0, 0.0, 2.0, -0.5};
  const Tensor y = layer.forward(x);
  CHECK(y.data == std::vector<double>{0.0, 0.0, 2.0, 0.0});
  Tensor g({1, 4});
  g.data = {1.0, 1.0, 1.0, 1.0};
  const Tensor gx = layer.backward(g);
  CHECK(gx.data == std::vector<double>{0.0, 0.0, 1.0, 0.0});
}

TEST_CASE("conv1d computes a valid correlation") {
  Conv1dLayer layer(1, 1, 2);
  auto params = layer.params();
  params[0]->data = {1.0, 2.0};
  params[1]->data = {0.5};
  Tensor x({1, 1, 4});
  x.data = {1.0, 2.0, 3.0, 4.0};
  const Tensor y = layer.forward(x);
  REQUIRE(y.shape == std::vector<std::size_t>{1, 1, 3});
  CHECK(y.data[0] == doctest::Approx(5.5));
  CHECK(y.data[1] == doctest::Approx(8.5));
  CHECK(y.data[2] == doctest::Approx(11.5));
}

TEST_CASE("conv1d sums over input maps") {
  Conv1dLayer layer(2, 1, 1);
  auto params = layer.params();
  params[0]->data = {3.0, 7.0};
  params[1]->data = {0.0};
  Tensor x({1, 2, 2});
  x.data = {1.0, 2.0, 10.0, 20.0};
  const Tensor y = layer.forward(x);
  CHECK(y.data[0] == doctest::Approx(3.0 + 70.0));
  CHECK(y.data[1] == doctest::Approx(6.0 + 140.0));
}

TEST_CASE("max pooling drops the remainder and takes the first maximum") {
  MaxPool1dLayer layer(2);
  Tensor x({1, 1, 5});
  x.data = {3.0, 1.0, 2.0, 2.0, 9.0};
  const Tensor y = layer.forward(x);
  REQUIRE(y.shape == std::vector<std::size_t>{1, 1, 2});
  CHECK(y.data[0] == 3.0);
  CHECK(y.data[1] == 2.0); // tie inside the window, 9.0 is in the dropped tail
  Tensor g({1, 1, 2});
  g.data = {1.0, 1.0};
  const Tensor gx = layer.backward(g);
  CHECK(gx.data == std::vector<double>{1.0, 0.0, 1.0, 0.0, 0.0});
}

TEST_CASE("flatten folds trailing axes and unfolds them back") {
  FlattenLayer layer;
  Rng rng(1);
  const Tensor x = random_tensor(rng, {2, 3, 4});
  const Tensor y = layer.forward(x);
  REQUIRE(y.shape == std::vector<std::size_t>{2, 12});
  CHECK(y.data == x.data);
  const Tensor back = layer.backward(y);
  CHECK(back.shape == x.shape);
  CHECK(back.data == x.data);
}

TEST_CASE("lstm forward matches an independent recurrence") {
  const std::size_t features = 3, units = 2, seq = 4;
  LstmLayer layer(features, units);
  Rng rng(11);
  layer.init_params(rng);
  auto params = layer.params();
  // Nonzero biases separate the four gates in the reference below.
  for (int g = 0; g < 4; ++g) {
    for (std::size_t d = 0; d < units; ++d) {
      params[2 * g + 1]->data[d] = 0.1 * static_cast<double>(g + 1) - 0.05 * static_cast<double>(d);
    }
  }
  Tensor x({1, seq, features});
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = 0.3 * static_cast<double>(i % 5) - 0.4;
  const Tensor out = layer.forward(x);
  REQUIRE(out.shape == std::vector<std::size_t>{1, units});

  // Reference recurrence straight from the parameter layout: each gate
  // weight is [units, units + features] over the concatenation [h, x].
  std::vector<double> h(units, 0.0), c(units, 0.0);
  for (std::size_t e = 0; e < seq; ++e) {
    std::vector<double> hn(units), cn(units);
    for (std::size_t d = 0; d < units; ++d) {
      double z[4];
      for (int g = 0; g < 4; ++g) {
        const Tensor& w = *params[2 * g];
        const Tensor& b = *params[2 * g + 1];
        double acc = b.data[d];
        for (std::size_t j = 0; j < units; ++j) {
          acc += w.data[d * (units + features) + j] * h[j];
        }
        for (std::size_t j = 0; j < features; ++j) {
          acc += w.data[d * (units + features) + units + j] * x.data[e * features + j];
        }
        z[g] = acc;
      }
      const double gi = sigmoid_ref(z[0]);
      const double gm = sigmoid_ref(z[1]);
      const double go = sigmoid_ref(z[2]);
      const double gc = std::tanh(z[3]);
      cn[d] = gi * gc + gm * c[d];
      hn[d] = go * std::tanh(cn[d]);
    }
    h = hn;
    c = cn;
  }
  for (std::size_t d = 0; d < units; ++d) {
    CHECK(out.data[d] == doctest::Approx(h[d]).epsilon(1e-12));
  }
}

TEST_CASE("gradients match central differences on a dense stack") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    ModelGraph g;
    g.add(std::make_unique<DenseLayer>(4, 6));
    g.add(std::make_unique<ReluLayer>());
    g.add(std::make_unique<DenseLayer>(6, 3, "linear"));
    g.init_params(rng);
    const Tensor x = random_tensor(rng, {5, 4});
    const Tensor y = random_tensor(rng, {5, 3});
    CHECK(max_grad_error(g, x, y) < 1e-4);
  }
}

TEST_CASE("gradients match central differences on a conv stack") {
  for (std::uint64_t seed = 4; seed <= 6; ++seed) {
    Rng rng(seed);
    ModelGraph g;
    g.add(std::make_unique<Conv1dLayer>(2, 3, 3));
    g.add(std::make_unique<ReluLayer>());
    g.add(std::make_unique<MaxPool1dLayer>(2));
    g.add(std::make_unique<FlattenLayer>());
    g.add(std::make_unique<DenseLayer>(3 * 4, 3, "linear"));
    g.init_params(rng);
    const Tensor x = random_tensor(rng, {3, 2, 10});
    const Tensor y = random_tensor(rng, {3, 3});
    CHECK(max_grad_error(g, x, y) < 1e-4);
  }
}

TEST_CASE("gradients match central differences through the lstm") {
  for (std::uint64_t seed = 7; seed <= 9; ++seed) {
    Rng rng(seed);
    ModelGraph g;
    g.add(std::make_unique<LstmLayer>(4, 3));
    g.add(std::make_unique<DenseLayer>(3, 3, "linear"));
    g.init_params(rng);
    const Tensor x = random_tensor(rng, {2, 5, 4});
    const Tensor y = random_tensor(rng, {2, 3});
    CHECK(max_grad_error(g, x, y) < 1e-4);
  }
}

TEST_CASE("gradients match central differences on a full frame-sequence graph") {
  Rng rng(10);
  ModelGraph g;
  g.add(std::make_unique<Conv1dLayer>(2, 3, 3));
  g.add(std::make_unique<ReluLayer>());
  g.add(std::make_unique<MaxPool1dLayer>(2));
  g.add(std::make_unique<FlattenLayer>());
  g.add(std::make_unique<LstmLayer>(3 * 3, 4));
  g.add(std::make_unique<DenseLayer>(4, 3, "linear"));
  g.init_params(rng);
  const Tensor x = random_tensor(rng, {2, 3, 2, 8});
  const Tensor y = random_tensor(rng, {2, 3});
  CHECK(max_grad_error(g, x, y) < 1e-4);
}

TEST_CASE("a sequence graph treats batch elements independently") {
  Rng rng(12);
  ModelGraph g = build_cnn_lstm(2, 32, 3);
  g.init_params(rng);
  const Tensor x = random_tensor(rng, {3, 3, 2, 32});
  const Tensor batched = g.forward(x);
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor one({1, 3, 2, 32});
    std::copy(&x.data[b * 3 * 2 * 32], &x.data[(b + 1) * 3 * 2 * 32], one.data.begin());
    const Tensor single = g.forward(one);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(single.data[k] == doctest::Approx(batched.data[b * 3 + k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("the mlp stack carries the published layer widths and size") {
  ModelGraph g = build_mlp(198);
  std::size_t total = 0;
  for (Tensor* p : g.params()) total += p->size();
  CHECK(total == 95003);
  const auto lines = g.spec_lines();
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "dense 198 300");
  CHECK(lines[6] == "linear 50 3");
}

TEST_CASE("the cnn head flattens to the documented feature size") {
  CHECK(cnn_feature_dim(64) == 608);
  CHECK(cnn_feature_dim(32) == 96); // ((32-14)/2 - 6) = 3 per map
  CHECK_THROWS_AS(cnn_feature_dim(15), data_error);
  ModelGraph g = build_cnn_lstm(4, 64, 10);
  std::size_t total = 0;
  for (Tensor* p : g.params()) total += p->size();
  // conv1 + conv2 + 4 lstm gates + head.
  const std::size_t expected = (64 * 4 * 15 + 64) + (32 * 64 * 7 + 32) +
                               4 * (50 * (50 + 608) + 50) + (50 * 3 + 3);
  CHECK(total == expected);
}

TEST_CASE("glorot initialization stays inside the fan limit") {
  Rng rng(13);
  DenseLayer layer(198, 300);
  layer.init_params(rng);
  const double limit = std::sqrt(6.0 / (198.0 + 300.0));
  const Tensor& w = *layer.params()[0];
  double biggest = 0.0;
  for (double v : w.data) {
    CHECK(std::fabs(v) <= limit);
    biggest = std::max(biggest, std::fabs(v));
  }
  CHECK(biggest > 0.5 * limit);
  for (double v : layer.params()[1]->data) CHECK(v == 0.0);
}

TEST_CASE("adam with a constant unit gradient steps by the learning rate") {
  Tensor p({1});
  p.data = {0.0};
  Tensor g({1});
  g.data = {1.0};
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam opt({&p}, cfg);
  opt.step({&g});
  opt.step({&g});
  // Bias-corrected m and v are exactly 1 for a constant unit gradient.
  CHECK(p.data[0] == doctest::Approx(-2.0 * 0.01 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam moves against the gradient sign") {
  for (const double sign : {1.0, -1.0}) {
    Tensor p({1});
    p.data = {0.5};
    Tensor g({1});
    g.data = {sign * 3.7};
    Adam opt({&p}, {});
    opt.step({&g});
    CHECK((p.data[0] < 0.5) == (sign > 0));
  }
}

TEST_CASE("training reduces the loss on a linear task") {
  Rng rng(14);
  const std::size_t n = 256, dim = 6;
  Tensor x = random_tensor(rng, {n, dim});
  Tensor y({n, 3});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < 3; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        acc += x.data[r * dim + j] * 0.2 * static_cast<double>(j + k + 1);
      }
      y.data[r * 3 + k] = acc;
    }
  }
  ModelGraph g;
  g.add(std::make_unique<DenseLayer>(dim, 16));
  g.add(std::make_unique<ReluLayer>());
  g.add(std::make_unique<DenseLayer>(16, 3, "linear"));
  Rng init(15);
  g.init_params(init);
  TrainConfig cfg;
  cfg.epochs = 80;
  cfg.batch_size = 32;
  cfg.seed = 99;
  cfg.adam.lr = 1e-2;
  const TrainHistory history = train(g, x, y, {}, {}, cfg);
  REQUIRE(history.train_loss.size() == 80);
  CHECK(history.val_loss.empty());
  CHECK(history.train_loss.back() < 0.05 * history.train_loss.front());
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
  Rng data_rng(16);
  const Tensor x = random_tensor(data_rng, {64, 5});
  const Tensor y = random_tensor(data_rng, {64, 3});
  auto run = [&](std::uint64_t train_seed) {
    ModelGraph g;
    g.add(std::make_unique<DenseLayer>(5, 8));
    g.add(std::make_unique<ReluLayer>());
    g.add(std::make_unique<DenseLayer>(8, 3, "linear"));
    Rng init(1234);
    g.init_params(init);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 16;
    cfg.seed = train_seed;
    train(g, x, y, {}, {}, cfg);
    std::vector<double> flat;
    for (Tensor* p : g.params()) flat.insert(flat.end(), p->data.begin(), p->data.end());
    return flat;
  };
  const auto a = run(7);
  const auto b = run(7);
  const auto c = run(8);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("validation loss is tracked per epoch") {
  Rng rng(17);
  const Tensor x = random_tensor(rng, {32, 4});
  const Tensor y = random_tensor(rng, {32, 3});
  const Tensor xv = random_tensor(rng, {8, 4});
  const Tensor yv = random_tensor(rng, {8, 3});
  ModelGraph g;
  g.add(std::make_unique<DenseLayer>(4, 3, "linear"));
  Rng init(18);
  g.init_params(init);
  TrainConfig cfg;
  cfg.epochs = 3;
  const TrainHistory history = train(g, x, y, xv, yv, cfg);
  CHECK(history.train_loss.size() == 3);
  CHECK(history.val_loss.size() == 3);
  for (double v : history.val_loss) CHECK(std::isfinite(v));
}

TEST_CASE("a diverging run raises a numeric error naming the epoch") {
  Rng rng(19);
  const Tensor x = random_tensor(rng, {16, 3});
  const Tensor y = random_tensor(rng, {16, 3});
  ModelGraph g;
  g.add(std::make_unique<DenseLayer>(3, 3, "linear"));
  Rng init(20);
  g.init_params(init);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  // Adam steps are scale-normalized, so divergence needs a rate large
  // enough that the very next forward pass overflows a double.
  cfg.adam.lr = 1e160;
  try {
    train(g, x, y, {}, {}, cfg);
    FAIL("expected numeric_error");
  } catch (const numeric_error& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("checkpoints restore the exact model") {
  Rng rng(21);
  ModelGraph g = build_cnn_lstm(3, 32, 4);
  g.init_params(rng);
  const auto path =
      (std::filesystem::temp_directory_path() / "ekr_neural_ckpt.txt").string();
  save_checkpoint(g, "cnnlstm", {4, 3, 32}, 777, 12, path);
  Checkpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.arch == "cnnlstm");
  CHECK(ckpt.input_shape == std::vector<std::size_t>{4, 3, 32});
  CHECK(ckpt.seed == 777);
  CHECK(ckpt.epoch == 12);
  CHECK(ckpt.model.spec_lines() == g.spec_lines());
  const Tensor x = random_tensor(rng, {2, 4, 3, 32});
  Tensor x_copy = x;
  const Tensor a = g.forward(x);
  const Tensor b = ckpt.model.forward(x_copy);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("layer shape violations raise data errors") {
  DenseLayer dense(4, 2);
  Tensor bad({2, 3});
  CHECK_THROWS_AS(dense.forward(bad), data_error);
  Conv1dLayer conv(2, 2, 5);
  Tensor short_sig({1, 2, 4});
  CHECK_THROWS_AS(conv.forward(short_sig), data_error);
  LstmLayer lstm(3, 2);
  Tensor flat({2, 3});
  CHECK_THROWS_AS(lstm.forward(flat), data_error);
}
