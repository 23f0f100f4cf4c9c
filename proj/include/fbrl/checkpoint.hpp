#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fbrl/nn.hpp"
#include "fbrl/rng.hpp"

namespace fbrl {

// Checkpoint directory layout: a manifest.txt listing one tensor per line
// ("name dtype ndims dim0 dim1 ... filename") plus one raw little-endian
// binary file per tensor. Supported dtypes: f32, f64, i64, u64. Writes go
// to a temporary directory renamed into place, and loads round-trip
// bit-exactly.
class TensorWriter {
 public:
  void add_f32(const std::string& name, const float* data,
               std::vector<std::int64_t> shape);
  void add_f64(const std::string& name, const double* data,
               std::vector<std::int64_t> shape);
  void add_i64(const std::string& name, const std::int64_t* data,
               std::vector<std::int64_t> shape);
  void add_u64(const std::string& name, const std::uint64_t* data,
               std::vector<std::int64_t> shape);

  void add_net(const std::string& prefix, const DenseNet& net);
  void add_adam(const std::string& prefix, const AdamState& state);
  void add_rng(const std::string& name, const Rng& rng);
  void add_scalar_i64(const std::string& name, std::int64_t v);
  void add_scalar_f64(const std::string& name, double v);

  // Writes manifest plus tensor files into `dir` via a temporary directory
  // renamed into place.
  void write(const std::string& dir) const;

  // Writes manifest plus tensor files directly into an existing directory;
  // callers handle atomicity (used when a checkpoint bundles extra files).
  void write_into(const std::string& dir) const;

 private:
  struct Entry {
    std::string name;
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;
  };
  std::vector<Entry> entries_;
};

class TensorReader {
 public:
  explicit TensorReader(const std::string& dir);

  bool has(const std::string& name) const;
  std::vector<float> read_f32(const std::string& name,
                              std::vector<std::int64_t>* shape = nullptr) const;
  std::vector<double> read_f64(const std::string& name,
                               std::vector<std::int64_t>* shape = nullptr) const;
  std::vector<std::int64_t> read_i64(const std::string& name) const;
  std::vector<std::uint64_t> read_u64(const std::string& name) const;

  void read_net(const std::string& prefix, DenseNet& net) const;
  void read_adam(const std::string& prefix, AdamState& state) const;
  void read_rng(const std::string& name, Rng& rng) const;
  std::int64_t read_scalar_i64(const std::string& name) const;
  double read_scalar_f64(const std::string& name) const;

  std::vector<std::string> names() const;

 private:
  struct Entry {
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::string file;
  };
  std::vector<std::uint8_t> read_bytes(const std::string& name,
                                       const std::string& expected_dtype,
                                       std::vector<std::int64_t>* shape) const;
  std::string dir_;
  std::map<std::string, Entry> entries_;
};

// Atomically replaces `path` with `content` (temp file + rename).
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace fbrl
