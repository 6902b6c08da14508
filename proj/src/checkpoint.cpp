#include "relit/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "relit/error.hpp"

namespace relit {

namespace {

constexpr char kMagic[4] = {'R', 'L', 'C', 'K'};

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get_pod(std::istream& is, const std::string& file) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError(file + ": truncated checkpoint");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::string& file) {
  const auto n = get_pod<std::uint32_t>(is, file);
  if (n > (1u << 20)) throw IoError(file + ": implausible string length in checkpoint");
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw IoError(file + ": truncated checkpoint");
  return s;
}

const torch::Tensor* find(const Checkpoint& ckpt, const std::string& name) {
  for (const auto& [n, t] : ckpt.tensors)
    if (n == name) return &t;
  return nullptr;
}

void copy_into(torch::Tensor& dst, const torch::Tensor& src, const std::string& name) {
  if (dst.sizes() != src.sizes()) throw ConfigError("checkpoint tensor '" + name + "' has the wrong shape");
  torch::NoGradGuard no_grad;
  dst.copy_(src.to(dst.dtype()));
}

torch::optim::AdamParamState* adam_state(torch::optim::Adam& opt, const torch::Tensor& p) {
  auto& state = opt.state();
  auto it = state.find(p.unsafeGetTensorImpl());
  if (it == state.end()) return nullptr;
  return static_cast<torch::optim::AdamParamState*>(it->second.get());
}

}  // namespace

bool Checkpoint::contains(const std::string& name) const { return find(*this, name) != nullptr; }

const torch::Tensor& Checkpoint::get(const std::string& name) const {
  const auto* t = find(*this, name);
  if (!t) throw ConfigError("checkpoint has no tensor '" + name + "'");
  return *t;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file) {
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write " + tmp.string());
    os.write(kMagic, 4);
    put<std::uint32_t>(os, Checkpoint::kVersion);
    put_string(os, ckpt.arch.serialize());
    put<std::int64_t>(os, ckpt.step);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
      put_string(os, name);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(tensor.dim()));
      for (auto d : tensor.sizes()) put<std::int64_t>(os, d);
      const auto payload = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
      os.write(reinterpret_cast<const char*>(payload.data_ptr<float>()),
               static_cast<std::streamsize>(payload.numel() * sizeof(float)));
    }
    if (!os) throw IoError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

Checkpoint read_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("no such checkpoint: " + file.string());
  const std::string f = file.string();
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError(f + ": not a checkpoint");
  const auto version = get_pod<std::uint32_t>(is, f);
  if (version != Checkpoint::kVersion)
    throw IoError(f + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.arch = ArchConfig::deserialize(get_string(is, f));
  ckpt.step = get_pod<std::int64_t>(is, f);
  const auto count = get_pod<std::uint32_t>(is, f);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = get_string(is, f);
    const auto ndim = get_pod<std::uint32_t>(is, f);
    if (ndim > 8) throw IoError(f + ": implausible tensor rank");
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) {
      d = get_pod<std::int64_t>(is, f);
      if (d < 0) throw IoError(f + ": negative tensor dimension");
    }
    auto t = torch::empty(dims, torch::kFloat32);
    if (!is.read(reinterpret_cast<char*>(t.data_ptr<float>()),
                 static_cast<std::streamsize>(t.numel() * sizeof(float))))
      throw IoError(f + ": truncated checkpoint");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters()) ckpt.tensors.emplace_back(prefix + p.key(), p.value().detach().clone());
  for (const auto& b : module.named_buffers()) ckpt.tensors.emplace_back(prefix + b.key(), b.value().detach().clone());
}

void restore_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module) {
  for (auto& p : module.named_parameters()) copy_into(p.value(), ckpt.get(prefix + p.key()), prefix + p.key());
  for (auto& b : module.named_buffers()) copy_into(b.value(), ckpt.get(prefix + b.key()), prefix + b.key());
}

void store_adam(Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& opt,
                const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters()) {
    const auto* s = adam_state(opt, p.value());
    if (!s) continue;
    const std::string base = prefix + p.key();
    ckpt.tensors.emplace_back(base + ".step", torch::tensor({static_cast<float>(s->step())}));
    ckpt.tensors.emplace_back(base + ".exp_avg", s->exp_avg().detach().clone());
    ckpt.tensors.emplace_back(base + ".exp_avg_sq", s->exp_avg_sq().detach().clone());
  }
}

void restore_adam(const Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& opt,
                  const torch::nn::Module& module) {
  auto& state = opt.state();
  for (const auto& p : module.named_parameters()) {
    const std::string base = prefix + p.key();
    if (!ckpt.contains(base + ".step")) {
      state.erase(p.value().unsafeGetTensorImpl());
      continue;
    }
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(static_cast<std::int64_t>(ckpt.get(base + ".step").item<float>()));
    auto avg = torch::zeros_like(p.value());
    auto avg_sq = torch::zeros_like(p.value());
    copy_into(avg, ckpt.get(base + ".exp_avg"), base + ".exp_avg");
    copy_into(avg_sq, ckpt.get(base + ".exp_avg_sq"), base + ".exp_avg_sq");
    s->exp_avg(avg);
    s->exp_avg_sq(avg_sq);
    state[p.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

void require_arch(const Checkpoint& ckpt, const ArchConfig& arch) {
  if (!(ckpt.arch == arch))
    throw ConfigError("checkpoint architecture does not match the configured one:\n" + ckpt.arch.serialize() +
                      "vs\n" + arch.serialize());
}

}  // namespace relit
