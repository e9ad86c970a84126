#include "mcl/ndcore.hpp"

#include <cmath>
#include <numbers>
#include <tuple>

namespace mcl {
namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

constexpr Index kPairwiseLeaf = 8;

void atb_range(const Matrix& a, const Matrix& d, Index lo, Index hi, Matrix& out) {
  const Index K = a.cols();
  const Index C = d.cols();
  if (hi - lo <= kPairwiseLeaf) {
    out.setZero(K, C);
    for (Index s = lo; s < hi; ++s) {
      const double* drow = d.data() + s * C;
      for (Index k = 0; k < K; ++k) {
        const double w = a(s, k);
        double* orow = out.data() + k * C;
        for (Index j = 0; j < C; ++j) orow[j] += w * drow[j];
      }
    }
    return;
  }
  const Index mid = lo + (hi - lo) / 2;
  atb_range(a, d, lo, mid, out);
  Matrix right;
  atb_range(a, d, mid, hi, right);
  out += right;
}

void colsum_range(const Matrix& d, Index lo, Index hi, FlatVector& out) {
  const Index C = d.cols();
  if (hi - lo <= kPairwiseLeaf) {
    out.setZero(C);
    for (Index s = lo; s < hi; ++s) {
      const double* drow = d.data() + s * C;
      for (Index j = 0; j < C; ++j) out[j] += drow[j];
    }
    return;
  }
  const Index mid = lo + (hi - lo) / 2;
  colsum_range(d, lo, mid, out);
  FlatVector right;
  colsum_range(d, mid, hi, right);
  out += right;
}

double sum_range(const double* v, Index lo, Index hi) {
  if (hi - lo <= kPairwiseLeaf) {
    double acc = 0.0;
    for (Index i = lo; i < hi; ++i) acc += v[i];
    return acc;
  }
  const Index mid = lo + (hi - lo) / 2;
  return sum_range(v, lo, mid) + sum_range(v, mid, hi);
}

}  // namespace

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void ensure_all_finite(const Matrix& m, std::string_view where) {
  if (!m.allFinite()) {
    throw DivergenceError(std::string(where) + ": non-finite entries in " + shape_string(m) +
                          " result");
  }
}

void ensure_all_finite(const FlatVector& v, std::string_view where) {
  if (!v.allFinite()) {
    throw DivergenceError(std::string(where) + ": non-finite entries in length-" +
                          std::to_string(v.size()) + " vector");
  }
}

Rng::Rng(std::uint64_t seed) : key_(mix64(seed + kGamma)) {}

Rng Rng::fork(std::string_view label) const {
  Rng child(0);
  child.key_ = mix64(key_ ^ mix64(hash_label(label)));
  child.counter_ = 0;
  return child;
}

Rng Rng::fork(std::string_view label, std::uint64_t a) const {
  Rng child = fork(label);
  child.key_ = mix64(child.key_ ^ mix64(a + kGamma));
  return child;
}

Rng Rng::fork(std::string_view label, std::uint64_t a, std::uint64_t b) const {
  Rng child = fork(label, a);
  child.key_ = mix64(child.key_ ^ mix64(b + 2 * kGamma));
  return child;
}

Rng Rng::fork(std::string_view label, std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
  Rng child = fork(label, a, b);
  child.key_ = mix64(child.key_ ^ mix64(c + 3 * kGamma));
  return child;
}

std::uint64_t Rng::next_u64() {
  counter_ += kGamma;
  return mix64(key_ ^ counter_);
}

double Rng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_gaussian() {
  const double u1 = 1.0 - next_unit();  // (0, 1]
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::next_below(std::uint64_t bound) {
  if (bound == 0) throw ArgumentError("Rng::next_below: bound must be >= 1");
  const std::uint64_t limit = (UINT64_MAX / bound) * bound;
  while (true) {
    const std::uint64_t r = next_u64();
    if (r < limit) return r % bound;
  }
}

void shuffle_indices(std::vector<Index>& idx, Rng& rng) {
  for (Index i = static_cast<Index>(idx.size()) - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
}

Matrix gaussian_init(Rng& rng, Index rows, Index cols, double scale) {
  if (scale < 0.0) throw ArgumentError("gaussian_init: scale must be >= 0");
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      m(r, c) = scale * rng.next_gaussian();
    }
  }
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a) + " * " +
                     shape_string(b));
  }
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  const Index N = a.rows(), K = a.cols(), C = b.cols();
  for (Index i = 0; i < N; ++i) {
    double* orow = out.data() + i * C;
    for (Index k = 0; k < K; ++k) {
      const double aik = a(i, k);
      const double* brow = b.data() + k * C;
      for (Index j = 0; j < C; ++j) orow[j] += aik * brow[j];
    }
  }
  ensure_all_finite(out, "matmul");
  return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_bt: inner dimensions differ, " + shape_string(a) + " * " +
                     shape_string(b) + "^T");
  }
  const Index N = a.rows(), J = a.cols(), K = b.rows();
  Matrix out(N, K);
  for (Index i = 0; i < N; ++i) {
    const double* arow = a.data() + i * J;
    for (Index k = 0; k < K; ++k) {
      const double* brow = b.data() + k * J;
      double acc = 0.0;
      for (Index j = 0; j < J; ++j) acc += arow[j] * brow[j];
      out(i, k) = acc;
    }
  }
  ensure_all_finite(out, "matmul_bt");
  return out;
}

Matrix matmul_at_pairwise(const Matrix& a, const Matrix& d) {
  if (a.rows() != d.rows()) {
    throw ShapeError("matmul_at_pairwise: row counts differ, " + shape_string(a) + "^T * " +
                     shape_string(d));
  }
  Matrix out;
  if (a.rows() == 0) {
    out.setZero(a.cols(), d.cols());
    return out;
  }
  atb_range(a, d, 0, a.rows(), out);
  return out;
}

FlatVector colsum_pairwise(const Matrix& d) {
  FlatVector out;
  if (d.rows() == 0) {
    out.setZero(d.cols());
    return out;
  }
  colsum_range(d, 0, d.rows(), out);
  return out;
}

double sum_pairwise(const double* values, Index n) {
  if (n <= 0) return 0.0;
  return sum_range(values, 0, n);
}

double sum_pairwise(const std::vector<double>& values) {
  return sum_pairwise(values.data(), static_cast<Index>(values.size()));
}

LayoutMap::LayoutMap(std::vector<LayoutSegment> segments) : segments_(std::move(segments)) {
  Index expected = 0;
  for (const auto& seg : segments_) {
    if (seg.rows < 0 || seg.cols < 0) {
      throw ShapeError("LayoutMap: negative dimensions in segment '" + seg.name + "'");
    }
    if (seg.offset != expected) {
      throw ShapeError("LayoutMap: segment '" + seg.name + "' at offset " +
                       std::to_string(seg.offset) + ", expected " + std::to_string(expected));
    }
    expected += seg.size();
  }
  total_ = expected;
}

LayoutMap LayoutMap::contiguous(const std::vector<std::tuple<std::string, Index, Index>>& shapes) {
  std::vector<LayoutSegment> segs;
  segs.reserve(shapes.size());
  Index offset = 0;
  for (const auto& [name, rows, cols] : shapes) {
    segs.push_back(LayoutSegment{name, offset, rows, cols});
    offset += rows * cols;
  }
  return LayoutMap(std::move(segs));
}

std::vector<Index> LayerStack::dims() const {
  std::vector<Index> d;
  if (weights.empty()) return d;
  d.push_back(weights.front().rows());
  for (const auto& w : weights) d.push_back(w.cols());
  return d;
}

LayerStack make_mlp_stack(const std::vector<Index>& dims, Rng& rng, bool zero_final_layer,
                          double hidden_init_scale) {
  if (dims.size() < 2) throw ArgumentError("make_mlp_stack: need at least input and output dims");
  LayerStack stack;
  std::vector<std::tuple<std::string, Index, Index>> shapes;
  const std::size_t L = dims.size() - 1;
  for (std::size_t k = 0; k < L; ++k) {
    const Index in = dims[k], out = dims[k + 1];
    if (in < 1 || out < 1) throw ArgumentError("make_mlp_stack: layer dims must be >= 1");
    const bool zero = zero_final_layer && k + 1 == L;
    if (zero) {
      stack.weights.push_back(Matrix::Zero(in, out));
    } else {
      const double scale = hidden_init_scale / std::sqrt(static_cast<double>(in));
      stack.weights.push_back(gaussian_init(rng, in, out, scale));
    }
    stack.biases.push_back(FlatVector::Zero(out));
    shapes.emplace_back("L" + std::to_string(k) + "/W", in, out);
    shapes.emplace_back("L" + std::to_string(k) + "/b", out, 1);
  }
  stack.layout = LayoutMap::contiguous(shapes);
  return stack;
}

FlatVector flatten(const LayerStack& stack, const LayoutMap& layout) {
  const auto& segs = layout.segments();
  if (segs.size() != 2 * stack.weights.size()) {
    throw ShapeError("flatten: layout has " + std::to_string(segs.size()) +
                     " segments for " + std::to_string(stack.weights.size()) + " layers");
  }
  FlatVector flat(layout.total_size());
  for (std::size_t k = 0; k < stack.weights.size(); ++k) {
    const auto& wseg = segs[2 * k];
    const auto& bseg = segs[2 * k + 1];
    const Matrix& w = stack.weights[k];
    const FlatVector& b = stack.biases[k];
    if (wseg.rows != w.rows() || wseg.cols != w.cols() || bseg.size() != b.size()) {
      throw ShapeError("flatten: segment '" + wseg.name + "' does not match layer shape " +
                       shape_string(w));
    }
    std::copy(w.data(), w.data() + wseg.size(), flat.data() + wseg.offset);
    std::copy(b.data(), b.data() + bseg.size(), flat.data() + bseg.offset);
  }
  return flat;
}

FlatVector flatten(const LayerStack& stack) { return flatten(stack, stack.layout); }

void unflatten(const FlatVector& flat, LayerStack& stack) {
  if (flat.size() != stack.param_count()) {
    throw ShapeError("unflatten: length " + std::to_string(flat.size()) + " vs layout size " +
                     std::to_string(stack.param_count()));
  }
  const auto& segs = stack.layout.segments();
  for (std::size_t k = 0; k < stack.weights.size(); ++k) {
    const auto& wseg = segs[2 * k];
    const auto& bseg = segs[2 * k + 1];
    std::copy(flat.data() + wseg.offset, flat.data() + wseg.offset + wseg.size(),
              stack.weights[k].data());
    std::copy(flat.data() + bseg.offset, flat.data() + bseg.offset + bseg.size(),
              stack.biases[k].data());
  }
}

}  // namespace mcl
