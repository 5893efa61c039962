#include "dfseg/nn/parameters.hpp"

#include "dfseg/errors.hpp"

#include <cmath>

namespace dfseg::nn {

template <typename Scalar>
ParameterStore<Scalar>::ParameterStore(const ParameterStore& other) {
  *this = other;
}

template <typename Scalar>
ParameterStore<Scalar>& ParameterStore<Scalar>::operator=(const ParameterStore& other) {
  if (this == &other) return *this;
  entries_.clear();
  entries_.reserve(other.entries_.size());
  for (const auto& e : other.entries_) {
    entries_.push_back({e.name, Var<Scalar>(e.var.value(), e.var.requires_grad()), e.trainable});
  }
  return *this;
}

template <typename Scalar>
std::size_t ParameterStore<Scalar>::add_parameter(std::string name, Tensor<Scalar> init) {
  entries_.push_back({std::move(name), Var<Scalar>(std::move(init), true), true});
  return entries_.size() - 1;
}

template <typename Scalar>
std::size_t ParameterStore<Scalar>::add_buffer(std::string name, Tensor<Scalar> init) {
  entries_.push_back({std::move(name), Var<Scalar>(std::move(init), false), false});
  return entries_.size() - 1;
}

template <typename Scalar>
std::optional<std::size_t> ParameterStore<Scalar>::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

template <typename Scalar>
std::vector<Var<Scalar>> ParameterStore<Scalar>::trainable(std::string_view prefix) const {
  std::vector<Var<Scalar>> out;
  for (const auto& e : entries_) {
    if (e.trainable && e.var.requires_grad() && std::string_view(e.name).starts_with(prefix)) {
      out.push_back(e.var);
    }
  }
  return out;
}

template <typename Scalar>
Index ParameterStore<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.var.value().data.size();
  }
  return n;
}

template <typename Scalar>
void ParameterStore<Scalar>::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

template <typename Scalar>
NamedTensors<Scalar> ParameterStore<Scalar>::state() const {
  NamedTensors<Scalar> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.emplace_back(e.name, e.var.value());
  return out;
}

template <typename Scalar>
void ParameterStore<Scalar>::load_state(const NamedTensors<Scalar>& state) {
  for (auto& e : entries_) {
    const Tensor<Scalar>* found = nullptr;
    for (const auto& [name, t] : state) {
      if (name == e.name) {
        found = &t;
        break;
      }
    }
    if (!found) throw CheckpointIncompatible("missing parameter '" + e.name + "'");
    if (!(found->shape == e.var.value().shape)) {
      throw CheckpointIncompatible("parameter '" + e.name + "' has shape " + found->shape.str() +
                                   ", expected " + e.var.value().shape.str());
    }
    e.var.value().data = found->data;
  }
}

namespace {

template <typename Scalar>
Tensor<Scalar> init_tensor(const Shape& shape, Init init, Index fan_in, std::mt19937_64& rng) {
  Tensor<Scalar> t(shape);
  if (init == Init::zeros) return t;
  const double stddev =
      init == Init::gan_normal ? 0.02 : std::sqrt(2.0 / static_cast<double>(fan_in));
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<Scalar>(dist(rng));
  return t;
}

}  // namespace

template <typename Scalar>
Conv2d Conv2d::make(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out,
                    Index kernel, ConvSpec spec, Init init, std::mt19937_64& rng, bool bias) {
  Conv2d layer;
  layer.kernel = kernel;
  layer.spec = spec;
  layer.has_bias = bias;
  layer.weight = store.add_parameter(
      name + ".weight",
      init_tensor<Scalar>(Shape{out, in, kernel, kernel}, init, in * kernel * kernel, rng));
  if (bias) layer.bias = store.add_parameter(name + ".bias", Tensor<Scalar>(Shape{1, out, 1, 1}));
  return layer;
}

template <typename Scalar>
ConvTranspose2d ConvTranspose2d::make(ParameterStore<Scalar>& store, const std::string& name,
                                      Index in, Index out, Index kernel, ConvSpec spec, Init init,
                                      std::mt19937_64& rng) {
  ConvTranspose2d layer;
  layer.kernel = kernel;
  layer.spec = spec;
  // Fan-in of a transposed conv: each output sees in * k*k / stride^2 inputs.
  const Index fan_in = std::max<Index>(1, in * kernel * kernel / (spec.stride * spec.stride));
  layer.weight = store.add_parameter(
      name + ".weight", init_tensor<Scalar>(Shape{in, out, kernel, kernel}, init, fan_in, rng));
  layer.bias = store.add_parameter(name + ".bias", Tensor<Scalar>(Shape{1, out, 1, 1}));
  return layer;
}

template <typename Scalar>
BatchNorm2d BatchNorm2d::make(ParameterStore<Scalar>& store, const std::string& name,
                              Index channels) {
  BatchNorm2d layer;
  const Shape s{1, channels, 1, 1};
  layer.gamma = store.add_parameter(name + ".weight", Tensor<Scalar>(s, Scalar(1)));
  layer.beta = store.add_parameter(name + ".bias", Tensor<Scalar>(s));
  layer.running_mean = store.add_buffer(name + ".running_mean", Tensor<Scalar>(s));
  layer.running_var = store.add_buffer(name + ".running_var", Tensor<Scalar>(s, Scalar(1)));
  return layer;
}

template <typename Scalar>
InstanceNorm2d InstanceNorm2d::make(ParameterStore<Scalar>& store, const std::string& name,
                                    Index channels) {
  InstanceNorm2d layer;
  const Shape s{1, channels, 1, 1};
  layer.gamma = store.add_parameter(name + ".weight", Tensor<Scalar>(s, Scalar(1)));
  layer.beta = store.add_parameter(name + ".bias", Tensor<Scalar>(s));
  return layer;
}

template <typename Scalar>
Adam<Scalar>::Adam(std::vector<Var<Scalar>> params, Options options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.push_back(Array::Zero(p.value().data.size()));
    v_.push_back(Array::Zero(p.value().data.size()));
  }
}

template <typename Scalar>
void Adam<Scalar>::step() {
  ++t_;
  const Scalar c1 = Scalar(1) - std::pow(options_.beta1, Scalar(t_));
  const Scalar c2 = Scalar(1) - std::pow(options_.beta2, Scalar(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const auto& g = p.grad();
    m_[i] = options_.beta1 * m_[i] + (Scalar(1) - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (Scalar(1) - options_.beta2) * g.square();
    p.value().data -= options_.lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + options_.eps);
    p.zero_grad();
  }
}

#define DFSEG_INSTANTIATE_PARAMS(S)                                                            \
  template class ParameterStore<S>;                                                            \
  template class Adam<S>;                                                                      \
  template Conv2d Conv2d::make<S>(ParameterStore<S>&, const std::string&, Index, Index, Index, \
                                  ConvSpec, Init, std::mt19937_64&, bool);                     \
  template ConvTranspose2d ConvTranspose2d::make<S>(ParameterStore<S>&, const std::string&,    \
                                                    Index, Index, Index, ConvSpec, Init,        \
                                                    std::mt19937_64&);                         \
  template BatchNorm2d BatchNorm2d::make<S>(ParameterStore<S>&, const std::string&, Index);    \
  template InstanceNorm2d InstanceNorm2d::make<S>(ParameterStore<S>&, const std::string&, Index);

DFSEG_INSTANTIATE_PARAMS(float)
DFSEG_INSTANTIATE_PARAMS(double)

}  // namespace dfseg::nn
