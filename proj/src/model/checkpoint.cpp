// SPDX-License-Identifier: Apache-2.0
#include "hrt/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hrt/errors.hpp"

namespace hrt {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'H', 'R', 'T', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename U>
  void pod(U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out_.append(buf, sizeof(U));
  }
  void str(std::string_view s) {
    pod<std::uint64_t>(s.size());
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string& buffer() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <typename U>
  U pod() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, in_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F32:
      return 4;
    case DType::F64:
    case DType::I64:
      return 8;
  }
  throw CheckpointError("unknown tensor dtype " + std::to_string(static_cast<int>(t)));
}

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() {
  return DType::F32;
}
template <>
constexpr DType dtype_of<double>() {
  return DType::F64;
}

}  // namespace

template <typename T>
void Checkpoint::put_matrix(const std::string& name, const Matrix<T>& m) {
  TensorRecord r;
  r.dtype = dtype_of<T>();
  r.shape = {static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())};
  r.bytes.assign(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(T));
  tensors[name] = std::move(r);
}

template <typename T>
Matrix<T> Checkpoint::get_matrix(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  const TensorRecord& r = it->second;
  if (r.shape.size() != 2) throw CheckpointError("tensor '" + name + "' is not a matrix");
  Matrix<T> m(r.shape[0], r.shape[1]);
  const std::size_t n = static_cast<std::size_t>(m.size());
  if (r.dtype == dtype_of<T>()) {
    std::memcpy(m.data(), r.bytes.data(), n * sizeof(T));
  } else if (r.dtype == DType::F32) {
    Matrix<float> f(r.shape[0], r.shape[1]);
    std::memcpy(f.data(), r.bytes.data(), n * sizeof(float));
    m = f.cast<T>();
  } else if (r.dtype == DType::F64) {
    Matrix<double> d(r.shape[0], r.shape[1]);
    std::memcpy(d.data(), r.bytes.data(), n * sizeof(double));
    m = d.cast<T>();
  } else {
    throw CheckpointError("tensor '" + name + "' is not floating point");
  }
  return m;
}

void Checkpoint::put_ints(const std::string& name, const std::vector<std::int64_t>& values) {
  TensorRecord r;
  r.dtype = DType::I64;
  r.shape = {static_cast<std::int64_t>(values.size())};
  r.bytes.assign(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(std::int64_t));
  tensors[name] = std::move(r);
}

std::vector<std::int64_t> Checkpoint::get_ints(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  if (it->second.dtype != DType::I64) throw CheckpointError("tensor '" + name + "' is not integer");
  std::vector<std::int64_t> v(it->second.bytes.size() / sizeof(std::int64_t));
  std::memcpy(v.data(), it->second.bytes.data(), v.size() * sizeof(std::int64_t));
  return v;
}

const std::string& Checkpoint::get_meta(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw CheckpointError("checkpoint has no metadata '" + key + "'");
  return it->second;
}

std::string Checkpoint::serialize() const {
  Writer w;
  w.raw(std::string_view(kMagic, sizeof kMagic));
  w.pod<std::uint32_t>(kVersion);
  w.str(config_echo);
  w.pod<std::uint64_t>(meta.size());
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.pod<std::uint64_t>(tensors.size());
  for (const auto& [name, r] : tensors) {
    w.str(name);
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(r.dtype));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) w.pod<std::int64_t>(d);
    w.str(r.bytes);
  }
  const std::uint64_t sum = fnv1a(w.buffer());
  w.pod<std::uint64_t>(sum);
  return std::move(w.buffer());
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (fnv1a(body) != stored) throw CheckpointError("checkpoint checksum mismatch (file corrupt)");

  Reader r(body);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.pod<char>();
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.config_echo = r.str();
  const auto nmeta = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    c.meta[std::move(k)] = r.str();
  }
  const auto ntensors = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < ntensors; ++i) {
    std::string name = r.str();
    TensorRecord t;
    t.dtype = static_cast<DType>(r.pod<std::uint8_t>());
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw CheckpointError("tensor '" + name + "' has implausible rank");
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.pod<std::int64_t>();
      if (dim < 0) throw CheckpointError("tensor '" + name + "' has a negative dimension");
      t.shape.push_back(dim);
      count *= static_cast<std::uint64_t>(dim);
    }
    t.bytes = r.str();
    if (t.bytes.size() != count * dtype_size(t.dtype)) {
      throw CheckpointError("tensor '" + name + "' payload does not match its shape");
    }
    c.tensors[std::move(name)] = std::move(t);
  }
  if (r.pos() != body.size()) throw CheckpointError("trailing bytes in checkpoint");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError("cannot move checkpoint into '" + path.string() + "': " + ec.message());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

template <typename T>
void export_model(LanguageModel<T>& model, Checkpoint& ckpt) {
  ckpt.meta["model.architecture"] = model.architecture().source;
  ckpt.meta["model.seed"] = std::to_string(model.seed());
  for (const auto& [k, v] : model.config().to_map()) ckpt.meta[k] = v;
  for (auto* p : model.parameters()) ckpt.put_matrix<T>("param/" + p->name, p->value);
}

template <typename T>
void load_parameters(LanguageModel<T>& model, const Checkpoint& ckpt) {
  for (auto* p : model.parameters()) {
    const std::string key = "param/" + p->name;
    if (!ckpt.has(key)) throw CheckpointError("checkpoint is missing parameter '" + p->name + "'");
    Matrix<T> m = ckpt.get_matrix<T>(key);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw CheckpointError("parameter '" + p->name + "' has shape " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()) + ", model expects " + std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()));
    }
    p->value = std::move(m);
  }
}

template <typename T>
LanguageModel<T> import_model(const Checkpoint& ckpt) {
  std::map<std::string, std::string> values;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.rfind("model.", 0) == 0 && k != "model.architecture" && k != "model.seed") values[k] = v;
  }
  ModelConfig cfg;
  ArchitectureSpec arch;
  std::uint64_t seed = 0;
  try {
    cfg = ModelConfig::from_map(values);
    arch = parse_architecture(ckpt.get_meta("model.architecture"));
    seed = std::stoull(ckpt.get_meta("model.seed"));
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint model description is invalid: ") + e.what());
  }
  LanguageModel<T> model(arch, cfg, seed);
  load_parameters(model, ckpt);
  return model;
}

template <typename T>
void export_state(const ModelState<T>& state, const std::string& prefix, Checkpoint& ckpt) {
  for (std::size_t i = 0; i < state.qrnn.size(); ++i) {
    const auto& s = state.qrnn[i];
    const std::string p = prefix + "qrnn" + std::to_string(i);
    ckpt.put_matrix<T>(p + ".cell", s.cell);
    ckpt.put_matrix<T>(p + ".prev_input", s.prev_input);
  }
  for (std::size_t i = 0; i < state.attention.size(); ++i) {
    const auto& m = state.attention[i];
    const std::string p = prefix + "attn" + std::to_string(i);
    ckpt.put_ints(p + ".shape", {m.states.time(), m.states.batch()});
    ckpt.put_matrix<T>(p + ".states", m.states.data());
    std::vector<std::int64_t> valid(m.valid.begin(), m.valid.end());
    ckpt.put_ints(p + ".valid", valid);
  }
}

template <typename T>
ModelState<T> import_state(const LanguageModel<T>& model, const std::string& prefix, const Checkpoint& ckpt) {
  ModelState<T> state = model.initial_state();
  for (std::size_t i = 0; i < state.qrnn.size(); ++i) {
    const std::string p = prefix + "qrnn" + std::to_string(i);
    state.qrnn[i].cell = ckpt.get_matrix<T>(p + ".cell");
    state.qrnn[i].prev_input = ckpt.get_matrix<T>(p + ".prev_input");
  }
  for (std::size_t i = 0; i < state.attention.size(); ++i) {
    const std::string p = prefix + "attn" + std::to_string(i);
    const auto shape = ckpt.get_ints(p + ".shape");
    if (shape.size() != 2) throw CheckpointError("bad attention memory shape for " + p);
    Matrix<T> data = ckpt.get_matrix<T>(p + ".states");
    if (shape[0] > 0) state.attention[i].states = SequenceTensor<T>(shape[0], shape[1], std::move(data));
    const auto valid = ckpt.get_ints(p + ".valid");
    state.attention[i].valid.assign(valid.begin(), valid.end());
  }
  return state;
}

template void Checkpoint::put_matrix<float>(const std::string&, const Matrix<float>&);
template void Checkpoint::put_matrix<double>(const std::string&, const Matrix<double>&);
template Matrix<float> Checkpoint::get_matrix<float>(const std::string&) const;
template Matrix<double> Checkpoint::get_matrix<double>(const std::string&) const;
template void export_model<float>(LanguageModel<float>&, Checkpoint&);
template void export_model<double>(LanguageModel<double>&, Checkpoint&);
template LanguageModel<float> import_model<float>(const Checkpoint&);
template LanguageModel<double> import_model<double>(const Checkpoint&);
template void load_parameters<float>(LanguageModel<float>&, const Checkpoint&);
template void load_parameters<double>(LanguageModel<double>&, const Checkpoint&);
template void export_state<float>(const ModelState<float>&, const std::string&, Checkpoint&);
template void export_state<double>(const ModelState<double>&, const std::string&, Checkpoint&);
template ModelState<float> import_state<float>(const LanguageModel<float>&, const std::string&, const Checkpoint&);
template ModelState<double> import_state<double>(const LanguageModel<double>&, const std::string&,
                                                 const Checkpoint&);

}  // namespace hrt
