#include "panoda/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

using nlohmann::json;

namespace panoda::checkpoint {

namespace {
constexpr char kMagic[8] = {'P', 'A', 'N', 'O', 'C', 'K', 'P', '1'};
}

void save_archive(const std::string& path, const std::string& meta_json,
                  const std::vector<NamedTensor>& tensors) {
  json index = json::array();
  uint64_t offset = 0;
  for (const auto& nt : tensors) {
    json e;
    e["name"] = nt.name;
    e["shape"] = nt.tensor.shape();
    e["offset"] = offset;
    offset += static_cast<uint64_t>(nt.tensor.size()) * sizeof(double);
    index.push_back(std::move(e));
  }
  json header;
  header["meta"] = json::parse(meta_json.empty() ? "{}" : meta_json);
  header["tensors"] = std::move(index);
  const std::string htext = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kMagic, sizeof(kMagic));
  const uint64_t hlen = htext.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& nt : tensors)
    f.write(reinterpret_cast<const char*>(nt.tensor.data()),
            static_cast<std::streamsize>(nt.tensor.size() * sizeof(double)));
  if (!f) throw std::runtime_error("write failure on checkpoint: " + path);
}

Archive load_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint archive: " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  f.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw std::runtime_error("truncated checkpoint header: " + path);
  json header = json::parse(htext);

  Archive a;
  a.meta_json = header.at("meta").dump();
  for (const auto& e : header.at("tensors")) {
    NamedTensor nt;
    nt.name = e.at("name").get<std::string>();
    nt.tensor = Tensor(e.at("shape").get<std::vector<int>>());
    f.read(reinterpret_cast<char*>(nt.tensor.data()),
           static_cast<std::streamsize>(nt.tensor.size() * sizeof(double)));
    if (!f) throw std::runtime_error("truncated checkpoint blob for " + nt.name + ": " + path);
    a.tensors.push_back(std::move(nt));
  }
  return a;
}

const Tensor& Archive::find(const std::string& name) const {
  for (const auto& nt : tensors)
    if (nt.name == name) return nt.tensor;
  throw std::runtime_error("checkpoint has no tensor named " + name);
}

bool Archive::has(const std::string& name) const {
  for (const auto& nt : tensors)
    if (nt.name == name) return true;
  return false;
}

}  // namespace panoda::checkpoint
