#include "conrad/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace conrad {

namespace {

constexpr char kMagic[] = "CONRADCKPT1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

void write_tensor(std::ofstream& f, const std::string& name, const Tensor& t) {
  write_u32(f, static_cast<std::uint32_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(f, static_cast<std::uint32_t>(t.rank()));
  for (int d = 0; d < t.rank(); ++d) {
    const std::int64_t dim = t.size(d);
    f.write(reinterpret_cast<const char*>(&dim), 8);
  }
  f.write(reinterpret_cast<const char*>(t.data()), t.numel() * 4);
}

std::pair<std::string, Tensor> read_tensor(std::ifstream& f) {
  const std::uint32_t name_len = read_u32(f);
  std::string name(name_len, '\0');
  f.read(name.data(), name_len);
  const std::uint32_t rank = read_u32(f);
  std::vector<std::int64_t> shape(rank);
  for (std::uint32_t d = 0; d < rank; ++d)
    f.read(reinterpret_cast<char*>(&shape[d]), 8);
  Tensor t(shape);
  f.read(reinterpret_cast<char*>(t.data()), t.numel() * 4);
  if (!f) throw std::runtime_error("truncated checkpoint tensor " + name);
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const std::string& path, Classifier& model, const CheckpointMeta& meta,
                     const std::vector<Tensor>* momentum_buffers) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);

    nlohmann::json j;
    j["config_hash"] = meta.config_hash;
    j["arch"] = meta.arch;
    j["num_classes"] = meta.num_classes;
    j["input_shape"] = meta.input_shape;
    j["epoch"] = meta.epoch;
    j["seed"] = meta.seed;
    j["clean_acc"] = meta.clean_acc;
    j["pgd10_acc"] = meta.pgd10_acc;
    j["best_pgd10"] = meta.best_pgd10;
    j["has_optimizer"] = momentum_buffers != nullptr;
    const std::string meta_str = j.dump();

    f.write(kMagic, static_cast<std::streamsize>(kMagicLen));
    write_u32(f, static_cast<std::uint32_t>(meta_str.size()));
    f.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    auto params = model.parameters();
    auto buffers = model.buffers();
    std::uint32_t count = static_cast<std::uint32_t>(params.size() + buffers.size());
    if (momentum_buffers) count += static_cast<std::uint32_t>(momentum_buffers->size());
    write_u32(f, count);
    for (auto& p : params) write_tensor(f, p.name, *p.tensor);
    for (auto& b : buffers) write_tensor(f, b.name, *b.tensor);
    if (momentum_buffers)
      for (std::size_t i = 0; i < momentum_buffers->size(); ++i)
        write_tensor(f, "opt.momentum." + std::to_string(i), (*momentum_buffers)[i]);
    if (!f) throw std::runtime_error("short checkpoint write: " + path);
  }
  std::remove(path.c_str());
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move checkpoint into place: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[kMagicLen];
  f.read(magic, static_cast<std::streamsize>(kMagicLen));
  if (!f || std::string(magic, kMagicLen) != kMagic)
    throw std::runtime_error("not a checkpoint file: " + path);

  const std::uint32_t meta_len = read_u32(f);
  std::string meta_str(meta_len, '\0');
  f.read(meta_str.data(), meta_len);
  nlohmann::json j = nlohmann::json::parse(meta_str);

  LoadedCheckpoint out;
  out.meta.config_hash = j.value("config_hash", "");
  out.meta.arch = j.value("arch", "tiny_cnn");
  out.meta.num_classes = j.value("num_classes", 10);
  out.meta.input_shape = j.value("input_shape", std::array<int, 3>{3, 32, 32});
  out.meta.epoch = j.value("epoch", 0);
  out.meta.seed = j.value("seed", std::uint64_t{0});
  out.meta.clean_acc = j.value("clean_acc", -1.0);
  out.meta.pgd10_acc = j.value("pgd10_acc", -1.0);
  out.meta.best_pgd10 = j.value("best_pgd10", -1.0);
  const bool has_optimizer = j.value("has_optimizer", false);

  out.model = Classifier::make(arch_from_name(out.meta.arch), out.meta.num_classes,
                               out.meta.input_shape, Rng(0, 0));

  const std::uint32_t count = read_u32(f);
  auto params = out.model.parameters();
  auto buffers = out.model.buffers();
  auto find_slot = [&](const std::string& name) -> Tensor* {
    for (auto& p : params)
      if (p.name == name) return p.tensor;
    for (auto& b : buffers)
      if (b.name == name) return b.tensor;
    return nullptr;
  };

  std::vector<std::pair<std::size_t, Tensor>> momentum;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, tensor] = read_tensor(f);
    if (name.rfind("opt.momentum.", 0) == 0) {
      momentum.emplace_back(std::stoul(name.substr(13)), std::move(tensor));
      continue;
    }
    Tensor* slot = find_slot(name);
    if (slot == nullptr) throw std::runtime_error("checkpoint tensor has no target: " + name);
    if (slot->shape() != tensor.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + name +
                               " (architecture does not match the archive)");
    *slot = std::move(tensor);
  }
  if (has_optimizer) {
    out.momentum_buffers.resize(params.size());
    for (auto& [idx, t] : momentum) out.momentum_buffers.at(idx) = std::move(t);
  }
  return out;
}

}  // namespace conrad
