#pragma once

#include <Eigen/Core>

#include <string>

namespace dfseg::nn {

using Index = Eigen::Index;

/// Dense NCHW shape. Parameters reuse it: a conv kernel is (out, in, k, k).
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  Index size() const { return n * c * h * w; }
  Index plane() const { return h * w; }
  Index sample_size() const { return c * h * w; }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
  }
};

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Tensor {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Shape shape;
  Array data;

  Tensor() = default;
  explicit Tensor(const Shape& s) : shape(s), data(Array::Zero(s.size())) {}
  Tensor(const Shape& s, Scalar fill) : shape(s), data(Array::Constant(s.size(), fill)) {}

  Scalar* sample_data(Index i) { return data.data() + i * shape.sample_size(); }
  const Scalar* sample_data(Index i) const { return data.data() + i * shape.sample_size(); }

  // Sample i as a (channels, H*W) matrix.
  Eigen::Map<RowMatrix<Scalar>> sample(Index i) {
    return {sample_data(i), shape.c, shape.plane()};
  }
  Eigen::Map<const RowMatrix<Scalar>> sample(Index i) const {
    return {sample_data(i), shape.c, shape.plane()};
  }

  // One (H, W) plane.
  Eigen::Map<RowMatrix<Scalar>> plane(Index i, Index ch) {
    return {sample_data(i) + ch * shape.plane(), shape.h, shape.w};
  }
  Eigen::Map<const RowMatrix<Scalar>> plane(Index i, Index ch) const {
    return {sample_data(i) + ch * shape.plane(), shape.h, shape.w};
  }

  Scalar& at(Index i, Index ch, Index y, Index x) {
    return data[((i * shape.c + ch) * shape.h + y) * shape.w + x];
  }
  Scalar at(Index i, Index ch, Index y, Index x) const {
    return data[((i * shape.c + ch) * shape.h + y) * shape.w + x];
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.shape = shape;
    out.data = data.template cast<Other>();
    return out;
  }
};

}  // namespace dfseg::nn
