#include "vidpriv/substrate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

namespace vidpriv {

namespace {

constexpr char kCheckpointMagic[8] = {'V', 'P', 'C', 'K', 'P', 'T', '0', '1'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default: throw Error("checkpoint: unsupported tensor dtype " + std::string(c10::toString(t)));
  }
}

torch::ScalarType dtype_from_name(const std::string& name) {
  if (name == "f32") return torch::kFloat32;
  if (name == "f64") return torch::kFloat64;
  if (name == "i64") return torch::kInt64;
  throw Error("checkpoint: unknown dtype tag '" + name + "'");
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw Error("sha256: digest init failed");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t size) {
    if (size > 0 && EVP_DigestUpdate(ctx_, data, size) != 1) throw Error("sha256: update failed");
  }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, digest.data(), &len) != 1) throw Error("sha256: final failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) {
      out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return out.str();
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string to_string(Role role) {
  switch (role) {
    case Role::anonymizer: return "anonymizer";
    case Role::utility: return "utility";
    case Role::ssl_privacy: return "ssl-privacy";
    case Role::target: return "target";
  }
  return "unknown";
}

Role role_from_string(std::string_view name) {
  if (name == "anonymizer") return Role::anonymizer;
  if (name == "utility") return Role::utility;
  if (name == "ssl-privacy") return Role::ssl_privacy;
  if (name == "target") return Role::target;
  throw Error("unknown model role '" + std::string(name) + "'");
}

void set_frozen(torch::nn::Module& module, bool frozen) {
  for (auto& p : module.parameters(/*recurse=*/true)) {
    p.set_requires_grad(!frozen);
    if (frozen && p.grad().defined()) p.mutable_grad() = torch::Tensor();
  }
}

bool is_frozen(const torch::nn::Module& module) {
  const auto params = module.parameters(true);
  return std::none_of(params.begin(), params.end(), [](const torch::Tensor& p) { return p.requires_grad(); });
}

FreezeGuard::FreezeGuard(torch::nn::Module& module) : module_(module), was_frozen_(is_frozen(module)) {
  set_frozen(module_, true);
}

FreezeGuard::~FreezeGuard() { set_frozen(module_, was_frozen_); }

std::vector<std::pair<std::string, torch::Tensor>> ordered_state(const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters(true)) out.emplace_back(item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) out.emplace_back(item.key(), item.value());
  return out;
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters(true)) n += p.numel();
  return n;
}

std::string sha256_hex(const void* data, std::size_t size) {
  Sha256 h;
  h.update(data, size);
  return h.hex();
}

std::string parameter_checksum(const torch::nn::Module& module) {
  Sha256 h;
  for (const auto& [name, tensor] : ordered_state(module)) {
    h.update(name.data(), name.size());
    auto t = tensor.detach().contiguous().cpu();
    h.update(t.data_ptr(), static_cast<std::size_t>(t.numel()) * t.element_size());
  }
  return h.hex();
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string() + " for hashing");
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

Checkpoint capture_checkpoint(Role role, nlohmann::json arch, const torch::nn::Module& module,
                              nlohmann::json extra) {
  Checkpoint ckpt;
  ckpt.role = role;
  ckpt.arch = std::move(arch);
  ckpt.extra = std::move(extra);
  for (const auto& [name, tensor] : ordered_state(module)) {
    ckpt.tensors.emplace_back(name, tensor.detach().clone().contiguous().cpu());
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["role"] = to_string(ckpt.role);
  header["arch"] = ckpt.arch;
  header["extra"] = ckpt.extra;
  auto table = nlohmann::json::array();
  for (const auto& [name, tensor] : ckpt.tensors) {
    table.push_back({{"name", name}, {"dtype", dtype_name(tensor.scalar_type())}, {"shape", tensor.sizes().vec()}});
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    auto t = tensor.contiguous();
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
  }
  if (!out) throw Error("short write on checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw Error(path.string() + " is not a vidpriv checkpoint");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("truncated checkpoint header in " + path.string());

  const auto header = nlohmann::json::parse(text);
  Checkpoint ckpt;
  ckpt.role = role_from_string(header.at("role").get<std::string>());
  ckpt.arch = header.at("arch");
  ckpt.extra = header.value("extra", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from_name(entry.at("dtype"))));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    if (!in) throw Error("truncated tensor '" + entry.at("name").get<std::string>() + "' in " + path.string());
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

void load_state(const Checkpoint& ckpt, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto params = module.named_parameters(true);
  auto buffers = module.named_buffers(true);
  std::size_t matched = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    torch::Tensor* dst = params.find(name);
    if (dst == nullptr) dst = buffers.find(name);
    if (dst == nullptr) throw Error("checkpoint tensor '" + name + "' has no counterpart in the model");
    if (dst->sizes() != tensor.sizes()) {
      throw Error("checkpoint tensor '" + name + "' has shape " + c10::str(tensor.sizes()) + ", model expects " +
                  c10::str(dst->sizes()));
    }
    dst->copy_(tensor);
    ++matched;
  }
  if (matched != params.size() + buffers.size()) {
    throw Error("checkpoint covers " + std::to_string(matched) + " tensors, model has " +
                std::to_string(params.size() + buffers.size()));
  }
}

double finite_diff_check(const std::function<torch::Tensor()>& fn, const std::vector<torch::Tensor>& wrt,
                         double eps, double floor) {
  for (const auto& t : wrt) {
    if (!t.requires_grad() || !t.is_leaf()) throw Error("finite_diff_check: inputs must be leaf tensors with grad");
    if (t.grad().defined()) t.grad().zero_();
  }
  auto value = fn();
  if (value.numel() != 1) throw Error("finite_diff_check: function output is not scalar");
  auto analytic_grads = torch::autograd::grad({value}, wrt, {}, false, false, /*allow_unused=*/true);

  double worst = 0.0;
  torch::NoGradGuard no_grad;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto flat = wrt[k].view(-1);
    auto analytic = analytic_grads[k].defined() ? analytic_grads[k].reshape(-1).to(torch::kFloat64)
                                                : torch::zeros({flat.numel()}, torch::kFloat64);
    for (std::int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i].fill_(orig + eps);
      const double plus = fn().item<double>();
      flat[i].fill_(orig - eps);
      const double minus = fn().item<double>();
      flat[i].fill_(orig);
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[i].item<double>();
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace vidpriv
