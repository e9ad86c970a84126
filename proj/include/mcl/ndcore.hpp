#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mcl {

using Index = Eigen::Index;

// Row-major storage so that flatten() and the checkpoint format see the
// canonical row-major byte order directly.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FlatVector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

std::string shape_string(const Matrix& m);

// Throws DivergenceError if any entry is NaN or Inf.
void ensure_all_finite(const Matrix& m, std::string_view where);
void ensure_all_finite(const FlatVector& v, std::string_view where);

// Counter-based generator (splitmix64 core). Identical seed gives an
// identical stream; fork() derives an independent stream from a purpose
// label without advancing the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng fork(std::string_view label) const;
  Rng fork(std::string_view label, std::uint64_t a) const;
  Rng fork(std::string_view label, std::uint64_t a, std::uint64_t b) const;
  Rng fork(std::string_view label, std::uint64_t a, std::uint64_t b, std::uint64_t c) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double next_unit();
  // Standard normal via Box-Muller; consumes two counter values per call.
  double next_gaussian();
  // Uniform integer in [0, bound); bound >= 1.
  std::uint64_t next_below(std::uint64_t bound);

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// Fisher-Yates shuffle driven by rng.
void shuffle_indices(std::vector<Index>& idx, Rng& rng);

// Entries i.i.d. normal(0, scale^2), filled in row-major order.
Matrix gaussian_init(Rng& rng, Index rows, Index cols, double scale);

// Fixed-order product: out(i,j) accumulates a(i,k)*b(k,j) with k ascending,
// bit-identical to the naive triple loop.
Matrix matmul(const Matrix& a, const Matrix& b);

// out(i,k) = sum_j a(i,j) * b(k,j), j ascending. (a * b^T)
Matrix matmul_bt(const Matrix& a, const Matrix& b);

// a^T * d with the reduction over rows of a done by a fixed pairwise tree
// (split at the midpoint, leaves accumulated sequentially). The tree shape
// depends only on the row count, so concatenating a batch with itself
// doubles the result exactly.
Matrix matmul_at_pairwise(const Matrix& a, const Matrix& d);

// Column sums of d with the same pairwise tree over rows.
FlatVector colsum_pairwise(const Matrix& d);

// Pairwise-tree sum of a contiguous range.
double sum_pairwise(const double* values, Index n);
double sum_pairwise(const std::vector<double>& values);

struct LayoutSegment {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
};

// Ordered, contiguous, non-overlapping segments covering [0, total_size).
class LayoutMap {
 public:
  LayoutMap() = default;
  explicit LayoutMap(std::vector<LayoutSegment> segments);  // validates

  // Assigns offsets in order from (name, rows, cols) triples.
  static LayoutMap contiguous(const std::vector<std::tuple<std::string, Index, Index>>& shapes);

  const std::vector<LayoutSegment>& segments() const { return segments_; }
  Index total_size() const { return total_; }

 private:
  std::vector<LayoutSegment> segments_;
  Index total_ = 0;
};

// Weights and biases of a fully connected stack; the shared flat-parameter
// representation used for classifier and predictor parameters alike.
// weights[k] is [dims[k] x dims[k+1]], biases[k] is [dims[k+1]].
struct LayerStack {
  std::vector<Matrix> weights;
  std::vector<FlatVector> biases;
  LayoutMap layout;

  Index param_count() const { return layout.total_size(); }
  Index num_layers() const { return static_cast<Index>(weights.size()); }
  std::vector<Index> dims() const;
};

// Gaussian weights with scale 1/sqrt(fan_in), zero biases. With
// zero_final_layer the last layer's weights and bias are zero instead.
// hidden_init_scale rescales the hidden-layer gaussian draw.
LayerStack make_mlp_stack(const std::vector<Index>& dims, Rng& rng,
                          bool zero_final_layer = false, double hidden_init_scale = 1.0);

// Concatenation of all segments in layout order; unflatten(flatten(x)) == x
// bit-exactly.
FlatVector flatten(const LayerStack& stack, const LayoutMap& layout);
FlatVector flatten(const LayerStack& stack);
void unflatten(const FlatVector& flat, LayerStack& stack);

}  // namespace mcl
