#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mucksim/nn.hpp"

namespace mucksim::nn {

// Checkpoint container: JSON manifest (names, shapes, dtypes, offsets, plus
// free-form text entries) followed by raw little-endian blobs. Round-trips
// bit-exactly.
class Checkpoint {
 public:
  void add_f32(const std::string& name, const Shape& shape, const float* data, int64_t n);
  void add_f64(const std::string& name, const Shape& shape, const double* data, int64_t n);
  void add_text(const std::string& name, const std::string& value);

  bool has(const std::string& name) const;
  bool has_text(const std::string& name) const;
  std::vector<float> get_f32(const std::string& name) const;
  std::vector<double> get_f64(const std::string& name) const;
  Shape shape_of(const std::string& name) const;
  std::string get_text(const std::string& name) const;
  std::vector<std::string> tensor_names() const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Convenience for parameter lists with stable names.
  template <typename T>
  void add_params(const std::string& prefix, const std::vector<Param<T>*>& params);
  template <typename T>
  void load_params(const std::string& prefix, const std::vector<Param<T>*>& params) const;

 private:
  struct Entry {
    std::string dtype;  // "f32" | "f64"
    Shape shape;
    uint64_t offset = 0;
    uint64_t count = 0;
  };
  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> text_;
  std::vector<char> blob_;
};

template <typename T>
void Checkpoint::add_params(const std::string& prefix, const std::vector<Param<T>*>& params) {
  for (const auto* p : params) {
    if constexpr (std::is_same_v<T, float>) {
      add_f32(prefix + p->name, p->value.shape, p->value.data(), p->value.size());
    } else {
      add_f64(prefix + p->name, p->value.shape, p->value.data(), p->value.size());
    }
  }
}

template <typename T>
void Checkpoint::load_params(const std::string& prefix, const std::vector<Param<T>*>& params) const {
  for (auto* p : params) {
    if constexpr (std::is_same_v<T, float>) {
      auto v = get_f32(prefix + p->name);
      if (static_cast<int64_t>(v.size()) != p->value.size()) {
        throw std::runtime_error("checkpoint: size mismatch for " + p->name);
      }
      p->value.v = std::move(v);
    } else {
      auto v = get_f64(prefix + p->name);
      if (static_cast<int64_t>(v.size()) != p->value.size()) {
        throw std::runtime_error("checkpoint: size mismatch for " + p->name);
      }
      p->value.v = std::move(v);
    }
  }
}

}  // namespace mucksim::nn
