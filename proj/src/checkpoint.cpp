#include "fbrl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fbrl/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace fbrl {

namespace fs = std::filesystem;

namespace {

std::string file_name_for(const std::string& tensor_name) {
  std::string f = tensor_name;
  for (char& c : f) {
    if (c == '/') c = '.';
  }
  return f + ".bin";
}

std::int64_t shape_elems(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

void TensorWriter::add_f32(const std::string& name, const float* data,
                           std::vector<std::int64_t> shape) {
  Entry e;
  e.name = name;
  e.dtype = "f32";
  e.shape = std::move(shape);
  e.bytes.resize(static_cast<std::size_t>(shape_elems(e.shape)) * 4);
  std::memcpy(e.bytes.data(), data, e.bytes.size());
  entries_.push_back(std::move(e));
}

void TensorWriter::add_f64(const std::string& name, const double* data,
                           std::vector<std::int64_t> shape) {
  Entry e;
  e.name = name;
  e.dtype = "f64";
  e.shape = std::move(shape);
  e.bytes.resize(static_cast<std::size_t>(shape_elems(e.shape)) * 8);
  std::memcpy(e.bytes.data(), data, e.bytes.size());
  entries_.push_back(std::move(e));
}

void TensorWriter::add_i64(const std::string& name, const std::int64_t* data,
                           std::vector<std::int64_t> shape) {
  Entry e;
  e.name = name;
  e.dtype = "i64";
  e.shape = std::move(shape);
  e.bytes.resize(static_cast<std::size_t>(shape_elems(e.shape)) * 8);
  std::memcpy(e.bytes.data(), data, e.bytes.size());
  entries_.push_back(std::move(e));
}

void TensorWriter::add_u64(const std::string& name, const std::uint64_t* data,
                           std::vector<std::int64_t> shape) {
  Entry e;
  e.name = name;
  e.dtype = "u64";
  e.shape = std::move(shape);
  e.bytes.resize(static_cast<std::size_t>(shape_elems(e.shape)) * 8);
  std::memcpy(e.bytes.data(), data, e.bytes.size());
  entries_.push_back(std::move(e));
}

void TensorWriter::add_net(const std::string& prefix, const DenseNet& net) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    add_f32(prefix + "/" + std::to_string(i) + "/W", l.weight.data(),
            {l.weight.rows(), l.weight.cols()});
    add_f32(prefix + "/" + std::to_string(i) + "/b", l.bias.data(),
            {l.bias.size()});
  }
}

void TensorWriter::add_adam(const std::string& prefix, const AdamState& st) {
  for (std::size_t i = 0; i < st.mw.size(); ++i) {
    const std::string base = prefix + "/" + std::to_string(i);
    add_f32(base + "/mW", st.mw[i].data(), {st.mw[i].rows(), st.mw[i].cols()});
    add_f32(base + "/vW", st.vw[i].data(), {st.vw[i].rows(), st.vw[i].cols()});
    add_f32(base + "/mb", st.mb[i].data(), {st.mb[i].size()});
    add_f32(base + "/vb", st.vb[i].data(), {st.vb[i].size()});
  }
  add_scalar_i64(prefix + "/t", st.t);
}

void TensorWriter::add_rng(const std::string& name, const Rng& rng) {
  const auto st = rng.state();
  add_u64(name, st.data(), {4});
}

void TensorWriter::add_scalar_i64(const std::string& name, std::int64_t v) {
  add_i64(name, &v, {1});
}

void TensorWriter::add_scalar_f64(const std::string& name, double v) {
  add_f64(name, &v, {1});
}

void TensorWriter::write_into(const std::string& dir) const {
  fs::create_directories(dir);
  std::ostringstream manifest;
  for (const auto& e : entries_) {
    const std::string file = file_name_for(e.name);
    manifest << e.name << ' ' << e.dtype << ' ' << e.shape.size();
    for (auto d : e.shape) manifest << ' ' << d;
    manifest << ' ' << file << '\n';
    std::ofstream out(fs::path(dir) / file, std::ios::binary | std::ios::trunc);
    if (!out) throw MissingArtifactError("cannot write tensor " + e.name);
    out.write(reinterpret_cast<const char*>(e.bytes.data()),
              static_cast<std::streamsize>(e.bytes.size()));
    if (!out) throw MissingArtifactError("short write for tensor " + e.name);
  }
  std::ofstream out(fs::path(dir) / "manifest.txt", std::ios::trunc);
  if (!out) throw MissingArtifactError("cannot write manifest");
  out << manifest.str();
}

void TensorWriter::write(const std::string& dir) const {
  const fs::path target(dir);
  const fs::path tmp(dir + ".tmp");
  std::error_code ec;
  fs::remove_all(tmp, ec);
  write_into(tmp.string());
  fs::remove_all(target, ec);
  fs::rename(tmp, target);
}

TensorReader::TensorReader(const std::string& dir) : dir_(dir) {
  std::ifstream in(fs::path(dir) / "manifest.txt");
  if (!in) {
    throw MissingArtifactError("no manifest.txt in checkpoint dir " + dir);
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    Entry e;
    std::size_t ndims = 0;
    ls >> name >> e.dtype >> ndims;
    e.shape.resize(ndims);
    for (auto& d : e.shape) ls >> d;
    ls >> e.file;
    if (!ls) throw MissingArtifactError("malformed manifest line: " + line);
    entries_[name] = std::move(e);
  }
}

bool TensorReader::has(const std::string& name) const {
  return entries_.count(name) != 0;
}

std::vector<std::uint8_t> TensorReader::read_bytes(
    const std::string& name, const std::string& expected_dtype,
    std::vector<std::int64_t>* shape) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw MissingArtifactError("tensor " + name + " missing from checkpoint");
  }
  if (it->second.dtype != expected_dtype) {
    throw MissingArtifactError("tensor " + name + " has dtype " +
                               it->second.dtype + ", expected " +
                               expected_dtype);
  }
  if (shape != nullptr) *shape = it->second.shape;
  const std::size_t width = expected_dtype == "f32" ? 4 : 8;
  const auto count =
      static_cast<std::size_t>(shape_elems(it->second.shape));
  std::vector<std::uint8_t> bytes(count * width);
  std::ifstream in(fs::path(dir_) / it->second.file, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open tensor file for " + name);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw MissingArtifactError("short read for tensor " + name);
  }
  return bytes;
}

std::vector<float> TensorReader::read_f32(
    const std::string& name, std::vector<std::int64_t>* shape) const {
  const auto bytes = read_bytes(name, "f32", shape);
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<double> TensorReader::read_f64(
    const std::string& name, std::vector<std::int64_t>* shape) const {
  const auto bytes = read_bytes(name, "f64", shape);
  std::vector<double> out(bytes.size() / 8);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<std::int64_t> TensorReader::read_i64(
    const std::string& name) const {
  const auto bytes = read_bytes(name, "i64", nullptr);
  std::vector<std::int64_t> out(bytes.size() / 8);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<std::uint64_t> TensorReader::read_u64(
    const std::string& name) const {
  const auto bytes = read_bytes(name, "u64", nullptr);
  std::vector<std::uint64_t> out(bytes.size() / 8);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

void TensorReader::read_net(const std::string& prefix, DenseNet& net) const {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& l = net.layers[i];
    std::vector<std::int64_t> shape;
    const auto w = read_f32(prefix + "/" + std::to_string(i) + "/W", &shape);
    if (shape.size() != 2 || shape[0] != l.weight.rows() ||
        shape[1] != l.weight.cols()) {
      throw MissingArtifactError("tensor shape mismatch for " + prefix +
                                 " layer " + std::to_string(i));
    }
    std::memcpy(l.weight.data(), w.data(), w.size() * sizeof(float));
    const auto b = read_f32(prefix + "/" + std::to_string(i) + "/b", &shape);
    if (shape.size() != 1 || shape[0] != l.bias.size()) {
      throw MissingArtifactError("bias shape mismatch for " + prefix);
    }
    std::memcpy(l.bias.data(), b.data(), b.size() * sizeof(float));
  }
}

void TensorReader::read_adam(const std::string& prefix,
                             AdamState& st) const {
  for (std::size_t i = 0; i < st.mw.size(); ++i) {
    const std::string base = prefix + "/" + std::to_string(i);
    const auto mw = read_f32(base + "/mW");
    const auto vw = read_f32(base + "/vW");
    const auto mb = read_f32(base + "/mb");
    const auto vb = read_f32(base + "/vb");
    std::memcpy(st.mw[i].data(), mw.data(), mw.size() * sizeof(float));
    std::memcpy(st.vw[i].data(), vw.data(), vw.size() * sizeof(float));
    std::memcpy(st.mb[i].data(), mb.data(), mb.size() * sizeof(float));
    std::memcpy(st.vb[i].data(), vb.data(), vb.size() * sizeof(float));
  }
  st.t = read_scalar_i64(prefix + "/t");
}

void TensorReader::read_rng(const std::string& name, Rng& rng) const {
  const auto words = read_u64(name);
  if (words.size() != 4) {
    throw MissingArtifactError("rng state " + name + " has wrong size");
  }
  rng.set_state({words[0], words[1], words[2], words[3]});
}

std::int64_t TensorReader::read_scalar_i64(const std::string& name) const {
  const auto v = read_i64(name);
  if (v.size() != 1) throw MissingArtifactError(name + " is not a scalar");
  return v[0];
}

double TensorReader::read_scalar_f64(const std::string& name) const {
  const auto v = read_f64(name);
  if (v.size() != 1) throw MissingArtifactError(name + " is not a scalar");
  return v[0];
}

std::vector<std::string> TensorReader::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write " + tmp);
    out << content;
    if (!out) throw MissingArtifactError("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

}  // namespace fbrl
