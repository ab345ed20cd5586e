#include "mucksim/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace mucksim::nn {

namespace {
constexpr char kMagic[8] = {'M', 'S', 'C', 'K', 'P', 'T', '0', '1'};
}

void Checkpoint::add_f32(const std::string& name, const Shape& shape, const float* data,
                         int64_t n) {
  Entry e;
  e.dtype = "f32";
  e.shape = shape;
  e.offset = blob_.size();
  e.count = static_cast<uint64_t>(n);
  const size_t bytes = static_cast<size_t>(n) * sizeof(float);
  blob_.resize(blob_.size() + bytes);
  std::memcpy(blob_.data() + e.offset, data, bytes);
  entries_[name] = std::move(e);
}

void Checkpoint::add_f64(const std::string& name, const Shape& shape, const double* data,
                         int64_t n) {
  Entry e;
  e.dtype = "f64";
  e.shape = shape;
  e.offset = blob_.size();
  e.count = static_cast<uint64_t>(n);
  const size_t bytes = static_cast<size_t>(n) * sizeof(double);
  blob_.resize(blob_.size() + bytes);
  std::memcpy(blob_.data() + e.offset, data, bytes);
  entries_[name] = std::move(e);
}

void Checkpoint::add_text(const std::string& name, const std::string& value) {
  text_[name] = value;
}

bool Checkpoint::has(const std::string& name) const { return entries_.count(name) > 0; }
bool Checkpoint::has_text(const std::string& name) const { return text_.count(name) > 0; }

std::vector<float> Checkpoint::get_f32(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
  if (it->second.dtype != "f32") throw std::runtime_error("checkpoint: dtype mismatch " + name);
  std::vector<float> out(it->second.count);
  std::memcpy(out.data(), blob_.data() + it->second.offset, out.size() * sizeof(float));
  return out;
}

std::vector<double> Checkpoint::get_f64(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
  if (it->second.dtype != "f64") throw std::runtime_error("checkpoint: dtype mismatch " + name);
  std::vector<double> out(it->second.count);
  std::memcpy(out.data(), blob_.data() + it->second.offset, out.size() * sizeof(double));
  return out;
}

Shape Checkpoint::shape_of(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
  return it->second.shape;
}

std::string Checkpoint::get_text(const std::string& name) const {
  auto it = text_.find(name);
  if (it == text_.end()) throw std::runtime_error("checkpoint: missing text " + name);
  return it->second;
}

std::vector<std::string> Checkpoint::tensor_names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

void Checkpoint::save(const std::string& path) const {
  nlohmann::json manifest;
  manifest["version"] = 1;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, e] : entries_) {
    tensors[name] = {{"dtype", e.dtype}, {"shape", e.shape}, {"offset", e.offset},
                     {"count", e.count}};
  }
  manifest["tensors"] = tensors;
  manifest["text"] = text_;
  const std::string m = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  const uint64_t mlen = m.size();
  f.write(reinterpret_cast<const char*>(&mlen), 8);
  f.write(m.data(), static_cast<std::streamsize>(m.size()));
  f.write(blob_.data(), static_cast<std::streamsize>(blob_.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  uint64_t mlen = 0;
  f.read(reinterpret_cast<char*>(&mlen), 8);
  std::string m(mlen, '\0');
  f.read(m.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw std::runtime_error("checkpoint: truncated manifest in " + path);
  const auto manifest = nlohmann::json::parse(m);

  Checkpoint ck;
  ck.text_ = manifest.at("text").get<std::map<std::string, std::string>>();
  std::vector<char> blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ck.blob_ = std::move(blob);
  for (const auto& [name, je] : manifest.at("tensors").items()) {
    Entry e;
    e.dtype = je.at("dtype").get<std::string>();
    e.shape = je.at("shape").get<Shape>();
    e.offset = je.at("offset").get<uint64_t>();
    e.count = je.at("count").get<uint64_t>();
    ck.entries_[name] = std::move(e);
  }
  return ck;
}

}  // namespace mucksim::nn
