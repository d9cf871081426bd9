#pragma once

// Seam between the training code and the differentiable-computation layer.
// Everything that needs gradients goes through libtorch modules; this header
// collects what the rest of the library relies on: role tags, freezing,
// parameter checksums, checkpoints and a central-difference gradient check.

#include <functional>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "vidpriv/common.hpp"

namespace vidpriv {

enum class Role { anonymizer, utility, ssl_privacy, target };

std::string to_string(Role role);
Role role_from_string(std::string_view name);

/// Freezing toggles requires_grad on every parameter of the module, so a
/// frozen collection never accumulates gradient and optimizers skip it.
void set_frozen(torch::nn::Module& module, bool frozen);
bool is_frozen(const torch::nn::Module& module);

/// RAII freeze: freezes on construction and restores the previous state.
class FreezeGuard {
 public:
  explicit FreezeGuard(torch::nn::Module& module);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_frozen_;
};

/// Named parameters and buffers in registration order.
std::vector<std::pair<std::string, torch::Tensor>> ordered_state(const torch::nn::Module& module);

std::int64_t parameter_count(const torch::nn::Module& module);

/// Hex SHA-256 over the ordered parameter and buffer bytes.
std::string parameter_checksum(const torch::nn::Module& module);

std::string sha256_hex(const void* data, std::size_t size);
std::string file_sha256(const std::filesystem::path& path);

/// On-disk model: a JSON header (role, architecture, tensor table) followed by
/// raw little-endian tensor blobs in table order.
struct Checkpoint {
  Role role = Role::anonymizer;
  nlohmann::json arch;
  nlohmann::json extra;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
};

Checkpoint capture_checkpoint(Role role, nlohmann::json arch, const torch::nn::Module& module,
                              nlohmann::json extra = nlohmann::json::object());
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies tensors into the module's parameters/buffers by name. Throws when a
/// name is missing or a shape differs.
void load_state(const Checkpoint& ckpt, torch::nn::Module& module);

/// Central-difference check of a scalar function's gradient with respect to
/// the given leaf tensors. Returns the largest relative error
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
double finite_diff_check(const std::function<torch::Tensor()>& fn, const std::vector<torch::Tensor>& wrt,
                         double eps = 1e-5, double floor = 1e-4);

}  // namespace vidpriv
