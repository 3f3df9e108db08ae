#pragma once

#include "ekr/matrix.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace ekr {

// Orthonormal conjugate-quadrature filter pair: sum h^2 = sum g^2 = 1,
// <h, g> = 0.
struct WaveletFilterPair {
  std::string name;
  std::vector<double> lowpass;
  std::vector<double> highpass;
};

WaveletFilterPair wavelet_db1();
WaveletFilterPair wavelet_db2();
WaveletFilterPair wavelet_by_name(const std::string& name);

// Full packet tree. node(0,0) is the input signal; node(p,r) for r even
// descends through the lowpass branch of its parent, odd through highpass.
class WpdTree {
 public:
  WpdTree(std::size_t depth, WaveletFilterPair wavelet);

  std::size_t depth() const { return depth_; }
  const WaveletFilterPair& wavelet() const { return wavelet_; }
  const std::vector<double>& node(std::size_t p, std::size_t r) const;
  std::vector<double>& node(std::size_t p, std::size_t r);

 private:
  std::size_t depth_;
  WaveletFilterPair wavelet_;
  std::vector<std::vector<std::vector<double>>> levels_;
};

// Analysis convention: child[k] = sum_m filt[m] * x[(2k + m) mod len], with
// periodic extension. Requires the length divisible by 2^depth.
WpdTree decompose(const std::vector<double>& signal, std::size_t depth,
                  const WaveletFilterPair& wavelet);

// Inverse transform from the leaf level; equals the root within roundoff.
std::vector<double> reconstruct(const WpdTree& tree);

enum class LeafOrder { natural, frequency };

// Permutation of leaf indices for the requested ordering. Natural order is
// the node index r itself; frequency order follows the Gray-code sequence.
std::vector<std::size_t> leaf_order(std::size_t depth, LeafOrder order);

// Leaf coefficients of one multi-channel window, rows channel-major then
// band: row c*2^depth + b holds band b of channel c. Columns are the
// window_len / 2^depth coefficient frames.
Matrix leaf_features(const Matrix& window, std::size_t depth,
                     const WaveletFilterPair& wavelet,
                     LeafOrder order = LeafOrder::natural);

} // namespace ekr
