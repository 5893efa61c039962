#pragma once

#include "dfseg/nn/ops.hpp"

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dfseg::nn {

template <typename Scalar>
using NamedTensors = std::vector<std::pair<std::string, Tensor<Scalar>>>;

/// Owns every parameter and buffer of one network. Copies are deep, so a
/// network holding a store has value semantics; layers refer to entries by
/// index.
template <typename Scalar>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var<Scalar> var;
    bool trainable = true;
  };

  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  std::size_t add_parameter(std::string name, Tensor<Scalar> init);
  std::size_t add_buffer(std::string name, Tensor<Scalar> init);

  const Var<Scalar>& operator[](std::size_t i) const { return entries_[i].var; }
  Var<Scalar>& operator[](std::size_t i) { return entries_[i].var; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::optional<std::size_t> find(std::string_view name) const;

  /// Trainable parameters whose name starts with `prefix`.
  std::vector<Var<Scalar>> trainable(std::string_view prefix = {}) const;
  Index parameter_count() const;
  void zero_grad();

  NamedTensors<Scalar> state() const;
  /// Copies values by name. Every entry must be present with an equal shape.
  void load_state(const NamedTensors<Scalar>& state);

 private:
  std::vector<Entry> entries_;
};

/// Deterministic parameter initializers.
enum class Init { kaiming_normal, gan_normal, zeros };

struct Conv2d {
  std::size_t weight = 0;
  std::size_t bias = 0;
  bool has_bias = true;
  Index kernel = 3;
  ConvSpec spec;

  template <typename Scalar>
  static Conv2d make(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out,
                     Index kernel, ConvSpec spec, Init init, std::mt19937_64& rng,
                     bool bias = true);

  template <typename Scalar>
  Var<Scalar> operator()(const ParameterStore<Scalar>& store, const Var<Scalar>& x) const {
    return conv2d(x, store[weight], has_bias ? store[bias] : Var<Scalar>{}, spec);
  }
};

struct ConvTranspose2d {
  std::size_t weight = 0;
  std::size_t bias = 0;
  Index kernel = 2;
  ConvSpec spec;

  template <typename Scalar>
  static ConvTranspose2d make(ParameterStore<Scalar>& store, const std::string& name, Index in,
                              Index out, Index kernel, ConvSpec spec, Init init,
                              std::mt19937_64& rng);

  template <typename Scalar>
  Var<Scalar> operator()(const ParameterStore<Scalar>& store, const Var<Scalar>& x) const {
    return conv_transpose2d(x, store[weight], store[bias], spec);
  }
};

struct BatchNorm2d {
  std::size_t gamma = 0;
  std::size_t beta = 0;
  std::size_t running_mean = 0;
  std::size_t running_var = 0;

  template <typename Scalar>
  static BatchNorm2d make(ParameterStore<Scalar>& store, const std::string& name, Index channels);

  template <typename Scalar>
  Var<Scalar> operator()(ParameterStore<Scalar>& store, const Var<Scalar>& x,
                         bool training) const {
    return batch_norm(x, store[gamma], store[beta], store[running_mean].value(),
                      store[running_var].value(), training);
  }
};

struct InstanceNorm2d {
  std::size_t gamma = 0;
  std::size_t beta = 0;

  template <typename Scalar>
  static InstanceNorm2d make(ParameterStore<Scalar>& store, const std::string& name,
                             Index channels);

  template <typename Scalar>
  Var<Scalar> operator()(const ParameterStore<Scalar>& store, const Var<Scalar>& x) const {
    return instance_norm(x, store[gamma], store[beta]);
  }
};

/// Adam with bias correction.
template <typename Scalar>
class Adam {
 public:
  struct Options {
    Scalar lr = Scalar(1e-4);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);
  };

  Adam(std::vector<Var<Scalar>> params, Options options);

  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  long steps() const { return t_; }

 private:
  using Array = typename Tensor<Scalar>::Array;
  std::vector<Var<Scalar>> params_;
  std::vector<Array> m_, v_;
  Options options_;
  long t_ = 0;
};

}  // namespace dfseg::nn
