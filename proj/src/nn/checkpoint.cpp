#include "dfseg/nn/checkpoint.hpp"

#include "dfseg/errors.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dfseg::nn {
namespace {

constexpr char kMagic[8] = {'D', 'F', 'S', 'G', 'P', 'A', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw LoadError("truncated parameter file: " + path.string());
  return v;
}

std::filesystem::path stem_of(const std::filesystem::path& p) {
  if (p.extension() == ".json" || p.extension() == ".params") {
    auto s = p;
    s.replace_extension();
    return s;
  }
  return p;
}

Shape fold_shape(Shape s, const Shape& target) {
  if (s.n == 3 && target.n == 1) s.n = 1;
  if (s.c == 3 && target.c == 1) s.c = 1;
  return s;
}

template <typename Scalar>
Tensor<Scalar> fold_axes(const Tensor<Scalar>& t, const Shape& target) {
  Tensor<Scalar> out = t;
  if (t.shape.n == 3 && target.n == 1) {
    Tensor<Scalar> f(Shape{1, out.shape.c, out.shape.h, out.shape.w});
    const Index len = out.shape.sample_size();
    for (Index n = 0; n < 3; ++n) f.data += out.data.segment(n * len, len);
    f.data /= Scalar(3);
    out = std::move(f);
  }
  if (out.shape.c == 3 && target.c == 1) out = fold_input_channels(out);
  return out;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> fold_input_channels(const Tensor<Scalar>& kernel) {
  const Shape s = kernel.shape;
  Tensor<Scalar> out(Shape{s.n, 1, s.h, s.w});
  for (Index o = 0; o < s.n; ++o) {
    for (Index c = 0; c < s.c; ++c) {
      out.data.segment(o * s.plane(), s.plane()) +=
          kernel.data.segment((o * s.c + c) * s.plane(), s.plane());
    }
  }
  out.data /= Scalar(s.c);
  return out;
}

template <typename Scalar>
void write_parameters(const std::filesystem::path& path, const NamedTensors<Scalar>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write parameter file: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(sizeof(Scalar)));
  put(out, static_cast<std::uint64_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    for (Index d : {t.shape.n, t.shape.c, t.shape.h, t.shape.w}) put(out, static_cast<std::int64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(Scalar)));
  }
  if (!out) throw LoadError("failed writing parameter file: " + path.string());
}

template <typename Scalar>
NamedTensors<Scalar> read_parameters(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open parameter file: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw LoadError("not a parameter file: " + path.string());
  }
  if (get<std::uint32_t>(in, path) != kVersion) {
    throw LoadError("unsupported parameter file version: " + path.string());
  }
  const auto width = get<std::uint32_t>(in, path);
  if (width != 4 && width != 8) throw LoadError("bad scalar width in " + path.string());
  const auto count = get<std::uint64_t>(in, path);
  NamedTensors<Scalar> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    Shape s;
    s.n = get<std::int64_t>(in, path);
    s.c = get<std::int64_t>(in, path);
    s.h = get<std::int64_t>(in, path);
    s.w = get<std::int64_t>(in, path);
    Tensor<Scalar> t(s);
    if (width == sizeof(Scalar)) {
      in.read(reinterpret_cast<char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(Scalar)));
    } else if (width == 4) {
      Eigen::ArrayXf tmp(s.size());
      in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * 4));
      t.data = tmp.cast<Scalar>();
    } else {
      Eigen::ArrayXd tmp(s.size());
      in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * 8));
      t.data = tmp.cast<Scalar>();
    }
    if (!in) throw LoadError("truncated parameter file: " + path.string());
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

template <typename Scalar>
std::filesystem::path save_checkpoint(const std::filesystem::path& stem_path,
                                      const NamedTensors<Scalar>& tensors,
                                      nlohmann::json sidecar) {
  const auto stem = stem_of(stem_path);
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  auto params = stem;
  params += ".params";
  auto json_path = stem;
  json_path += ".json";
  write_parameters(params, tensors);
  sidecar["params_file"] = params.filename().string();
  sidecar["content_hash"] = "sha256:" + sha256_file(params);
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw LoadError("cannot write checkpoint sidecar: " + json_path.string());
  out << sidecar.dump(2) << "\n";
  return json_path;
}

template <typename Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  const auto stem = stem_of(path);
  auto json_path = stem;
  json_path += ".json";
  std::ifstream in(json_path);
  if (!in) throw LoadError("cannot open checkpoint sidecar: " + json_path.string());
  LoadedCheckpoint<Scalar> ck;
  try {
    ck.sidecar = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed checkpoint sidecar " + json_path.string() + ": " + e.what());
  }
  auto params = json_path.parent_path() / ck.sidecar.value("params_file", stem.filename().string() + ".params");
  if (!std::filesystem::exists(params)) throw LoadError("missing parameter file: " + params.string());
  if (ck.sidecar.contains("content_hash")) {
    const std::string expected = ck.sidecar["content_hash"];
    if (expected != "sha256:" + sha256_file(params)) {
      throw ValidationError("checkpoint content hash mismatch: " + params.string());
    }
  }
  ck.tensors = read_parameters<Scalar>(params);
  return ck;
}

template <typename Scalar>
void load_with_channel_folding(ParameterStore<Scalar>& store, const NamedTensors<Scalar>& tensors,
                               std::string_view prefix, std::string_view source_prefix) {
  for (std::size_t i = 0; i < store.entries().size(); ++i) {
    const std::string& name = store.entries()[i].name;
    if (!std::string_view(name).starts_with(prefix)) continue;
    const std::string source = std::string(source_prefix) + name.substr(prefix.size());
    const Tensor<Scalar>* found = nullptr;
    for (const auto& [n, t] : tensors) {
      if (n == source) {
        found = &t;
        break;
      }
    }
    if (!found) throw CheckpointIncompatible("checkpoint lacks parameter '" + source + "'");
    const Shape target = store[i].value().shape;
    if (found->shape == target) {
      store[i].value().data = found->data;
    } else if (fold_shape(found->shape, target) == target) {
      store[i].value().data = fold_axes(*found, target).data;
    } else {
      throw CheckpointIncompatible("parameter '" + name + "' has shape " + found->shape.str() +
                                   " in checkpoint, expected " + target.str());
    }
  }
}

#define DFSEG_INSTANTIATE_CKPT(S)                                                             \
  template Tensor<S> fold_input_channels(const Tensor<S>&);                                   \
  template void write_parameters(const std::filesystem::path&, const NamedTensors<S>&);       \
  template NamedTensors<S> read_parameters(const std::filesystem::path&);                     \
  template std::filesystem::path save_checkpoint(const std::filesystem::path&,                \
                                                 const NamedTensors<S>&, nlohmann::json);     \
  template LoadedCheckpoint<S> load_checkpoint(const std::filesystem::path&);                 \
  template void load_with_channel_folding(ParameterStore<S>&, const NamedTensors<S>&,         \
                                          std::string_view, std::string_view);

DFSEG_INSTANTIATE_CKPT(float)
DFSEG_INSTANTIATE_CKPT(double)

}  // namespace dfseg::nn
