#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "relit/model.hpp"

namespace relit {

/// Binary container: "RLCK", u32 version, u32-length ArchConfig text, i64
/// step, u32 tensor count, then per tensor a u32-length name, u32 ndim, i64
/// dims and a float32 payload. All integers little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ArchConfig arch;
  std::int64_t step = 0;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  /// Throws if absent.
  const torch::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

/// Written to a temporary sibling and renamed into place.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file);
Checkpoint read_checkpoint(const std::filesystem::path& file);

/// Appends `prefix + name` for every parameter and buffer.
void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module);
/// Copies stored values into the module; every parameter must be present
/// with the same shape.
void restore_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module);

/// Adam moments and step counters keyed by parameter name.
void store_adam(Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& opt,
                const torch::nn::Module& module);
void restore_adam(const Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& opt,
                  const torch::nn::Module& module);

/// Throws ConfigError unless the checkpoint was written for exactly `arch`.
void require_arch(const Checkpoint& ckpt, const ArchConfig& arch);

}  // namespace relit
