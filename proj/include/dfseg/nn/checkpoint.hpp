#pragma once

#include "dfseg/nn/parameters.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace dfseg::nn {

// A checkpoint is a pair of files sharing a stem:
//   <stem>.params  binary tensors ("DFSGPARM", version, dtype, count, entries)
//   <stem>.json    sidecar {kind, config, seed, trained_epochs, params_file, content_hash, ...}
// The content hash is the SHA-256 of the .params file and is verified on load.

template <typename Scalar>
void write_parameters(const std::filesystem::path& path, const NamedTensors<Scalar>& tensors);

/// Reads a parameter file, converting from the stored precision if needed.
template <typename Scalar>
NamedTensors<Scalar> read_parameters(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Writes `<stem>.params` and `<stem>.json`; returns the sidecar path. The
/// sidecar gains `params_file` and `content_hash` keys.
template <typename Scalar>
std::filesystem::path save_checkpoint(const std::filesystem::path& stem,
                                      const NamedTensors<Scalar>& tensors,
                                      nlohmann::json sidecar);

template <typename Scalar>
struct LoadedCheckpoint {
  NamedTensors<Scalar> tensors;
  nlohmann::json sidecar;
};

/// Accepts the sidecar path, the params path, or the bare stem.
template <typename Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into `store` by name. A stored tensor whose
/// shape differs from the target only by having 3 instead of 1 entries on the
/// output or input channel axis is folded by averaging over that axis.
/// Entries of `store` not starting with `prefix` are left untouched; entries
/// that do must all be present. Throws CheckpointIncompatible naming the first
/// mismatch.
template <typename Scalar>
void load_with_channel_folding(ParameterStore<Scalar>& store, const NamedTensors<Scalar>& tensors,
                               std::string_view prefix = {},
                               std::string_view source_prefix = {});

/// Averages a (out, 3, k, k) kernel over its input-channel axis.
template <typename Scalar>
Tensor<Scalar> fold_input_channels(const Tensor<Scalar>& kernel);

}  // namespace dfseg::nn
