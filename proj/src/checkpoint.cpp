#include "namerec/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace namerec {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("checkpoint truncated in " + what);
  return v;
}

std::string get_bytes(std::istream& in, std::uint64_t n, const std::string& what) {
  constexpr std::uint64_t kLimit = 1ull << 32;
  if (n > kLimit) throw std::runtime_error("checkpoint " + what + " length is implausible");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) throw std::runtime_error("checkpoint truncated in " + what);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header, const nn::ParameterSet& params) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    std::string h = header.dump();
    put<std::uint64_t>(out, h.size());
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    auto all = params.all();
    put<std::uint64_t>(out, all.size());
    for (const nn::Parameter* p : all) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
      out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path.string() + " is not a checkpoint");
  Checkpoint c;
  std::string h = get_bytes(in, get<std::uint64_t>(in, "header"), "header");
  try {
    c.header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint header is not JSON: ") + e.what());
  }
  auto count = get<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_bytes(in, get<std::uint32_t>(in, "tensor name"), "tensor name");
    auto rows = get<std::uint64_t>(in, name);
    auto cols = get<std::uint64_t>(in, name);
    if (rows > (1u << 24) || cols > (1u << 24)) throw std::runtime_error("checkpoint tensor " + name + " is implausibly large");
    nn::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    auto bytes = static_cast<std::streamsize>(m.size() * sizeof(double));
    if (bytes > 0 && !in.read(reinterpret_cast<char*>(m.data()), bytes))
      throw std::runtime_error("checkpoint truncated in " + name);
    c.tensors.emplace_back(std::move(name), std::move(m));
  }
  return c;
}

void apply_checkpoint(const Checkpoint& ckpt, nn::ParameterSet& params) {
  for (nn::Parameter* p : params.all()) {
    auto it = std::find_if(ckpt.tensors.begin(), ckpt.tensors.end(), [&](const auto& t) { return t.first == p->name; });
    if (it == ckpt.tensors.end()) throw std::runtime_error("checkpoint lacks parameter " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw std::runtime_error("checkpoint shape mismatch for " + p->name);
    p->value = it->second;
  }
}

}  // namespace namerec
