#include "ekr/wpd.hpp"

#include "ekr/errors.hpp"

#include <cmath>

namespace ekr {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

} // namespace

WaveletFilterPair wavelet_db1() {
  return {"db1", {kInvSqrt2, kInvSqrt2}, {kInvSqrt2, -kInvSqrt2}};
}

WaveletFilterPair wavelet_db2() {
  const double s3 = std::sqrt(3.0);
  const double d = 4.0 * std::sqrt(2.0);
  const std::vector<double> h = {(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d};
  return {"db2", h, {h[3], -h[2], h[1], -h[0]}};
}

WaveletFilterPair wavelet_by_name(const std::string& name) {
  if (name == "db1") return wavelet_db1();
  if (name == "db2") return wavelet_db2();
  throw data_error("unknown wavelet '" + name + "' (expected db1 or db2)");
}

WpdTree::WpdTree(std::size_t depth, WaveletFilterPair wavelet)
    : depth_(depth), wavelet_(std::move(wavelet)), levels_(depth + 1) {
  for (std::size_t p = 0; p <= depth; ++p) levels_[p].resize(std::size_t{1} << p);
}

const std::vector<double>& WpdTree::node(std::size_t p, std::size_t r) const {
  if (p > depth_ || r >= levels_[p].size()) {
    throw data_error("wpd node (" + std::to_string(p) + ", " + std::to_string(r) +
                     ") outside tree of depth " + std::to_string(depth_));
  }
  return levels_[p][r];
}

std::vector<double>& WpdTree::node(std::size_t p, std::size_t r) {
  if (p > depth_ || r >= levels_[p].size()) {
    throw data_error("wpd node (" + std::to_string(p) + ", " + std::to_string(r) +
                     ") outside tree of depth " + std::to_string(depth_));
  }
  return levels_[p][r];
}

namespace {

void split_node(const std::vector<double>& parent, const WaveletFilterPair& w,
                std::vector<double>& low, std::vector<double>& high) {
  const std::size_t len = parent.size();
  const std::size_t half = len / 2;
  low.assign(half, 0.0);
  high.assign(half, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    double a = 0.0;
    double d = 0.0;
    for (std::size_t m = 0; m < w.lowpass.size(); ++m) {
      const double x = parent[(2 * k + m) % len];
      a += w.lowpass[m] * x;
      d += w.highpass[m] * x;
    }
    low[k] = a;
    high[k] = d;
  }
}

void merge_node(const std::vector<double>& low, const std::vector<double>& high,
                const WaveletFilterPair& w, std::vector<double>& parent) {
  const std::size_t len = 2 * low.size();
  parent.assign(len, 0.0);
  for (std::size_t k = 0; k < low.size(); ++k) {
    for (std::size_t m = 0; m < w.lowpass.size(); ++m) {
      const std::size_t n = (2 * k + m) % len;
      parent[n] += low[k] * w.lowpass[m] + high[k] * w.highpass[m];
    }
  }
}

} // namespace

WpdTree decompose(const std::vector<double>& signal, std::size_t depth,
                  const WaveletFilterPair& wavelet) {
  if (signal.empty()) throw data_error("wpd decompose: empty signal");
  const std::size_t block = std::size_t{1} << depth;
  if (depth > 0 && (std::size_t{1} << depth) > signal.size()) {
    throw data_error("wpd decompose: depth " + std::to_string(depth) +
                     " exceeds log2 of length " + std::to_string(signal.size()));
  }
  if (signal.size() % block != 0) {
    throw data_error("wpd decompose: length " + std::to_string(signal.size()) +
                     " not divisible by 2^" + std::to_string(depth));
  }
  WpdTree tree(depth, wavelet);
  tree.node(0, 0) = signal;
  for (std::size_t p = 0; p < depth; ++p) {
    for (std::size_t r = 0; r < (std::size_t{1} << p); ++r) {
      split_node(tree.node(p, r), wavelet, tree.node(p + 1, 2 * r), tree.node(p + 1, 2 * r + 1));
    }
  }
  return tree;
}

std::vector<double> reconstruct(const WpdTree& tree) {
  const std::size_t depth = tree.depth();
  if (depth == 0) return tree.node(0, 0);
  for (std::size_t r = 0; r < (std::size_t{1} << depth); ++r) {
    if (tree.node(depth, r).empty()) {
      throw data_error("wpd reconstruct: missing leaf " + std::to_string(r));
    }
  }
  std::vector<std::vector<double>> level;
  for (std::size_t r = 0; r < (std::size_t{1} << depth); ++r) level.push_back(tree.node(depth, r));
  for (std::size_t p = depth; p > 0; --p) {
    std::vector<std::vector<double>> parents(std::size_t{1} << (p - 1));
    for (std::size_t r = 0; r < parents.size(); ++r) {
      merge_node(level[2 * r], level[2 * r + 1], tree.wavelet(), parents[r]);
    }
    level = std::move(parents);
  }
  return level[0];
}

std::vector<std::size_t> leaf_order(std::size_t depth, LeafOrder order) {
  const std::size_t n = std::size_t{1} << depth;
  std::vector<std::size_t> idx(n);
  for (std::size_t k = 0; k < n; ++k) {
    idx[k] = (order == LeafOrder::natural) ? k : (k ^ (k >> 1));
  }
  return idx;
}

Matrix leaf_features(const Matrix& window, std::size_t depth,
                     const WaveletFilterPair& wavelet, LeafOrder order) {
  const std::size_t bands = std::size_t{1} << depth;
  if (window.cols() == 0 || window.cols() % bands != 0) {
    throw data_error("wpd leaf_features: window length " + std::to_string(window.cols()) +
                     " not divisible by 2^" + std::to_string(depth));
  }
  const std::size_t frames = window.cols() / bands;
  const std::vector<std::size_t> bands_in_order = leaf_order(depth, order);
  Matrix features(window.rows() * bands, frames);
  std::vector<double> chan(window.cols());
  for (std::size_t c = 0; c < window.rows(); ++c) {
    for (std::size_t t = 0; t < window.cols(); ++t) chan[t] = window(c, t);
    const WpdTree tree = decompose(chan, depth, wavelet);
    for (std::size_t b = 0; b < bands; ++b) {
      const std::vector<double>& leaf = tree.node(depth, bands_in_order[b]);
      for (std::size_t t = 0; t < frames; ++t) features(c * bands + b, t) = leaf[t];
    }
  }
  return features;
}

} // namespace ekr
