#include "fpnseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "fpnseg/error.hpp"

namespace fpnseg {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  template <typename T>
  void scalar(T v) { bytes(&v, sizeof v); }
  void str(const std::string& s) {
    scalar(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    scalar(static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape()) scalar(static_cast<uint32_t>(d));
    bytes(t.ptr(), static_cast<size_t>(t.numel()) * sizeof(float));
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("failed writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open checkpoint " + path.string());
  }
  void bytes(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n)
      throw CheckpointError("truncated checkpoint " + path_.string());
  }
  template <typename T>
  T scalar() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = scalar<uint32_t>();
    if (n > (1u << 20)) throw CheckpointError("implausible string length in " + path_.string());
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& model,
                     const RunConfig& config) {
  RunConfig run = config;
  run.model = model.config;
  auto kv = run.items();
  kv.emplace_back("optimizer.step", std::to_string(model.step));

  Writer w(path);
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.scalar(kCheckpointVersion);
  w.scalar(static_cast<uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    w.str(k);
    w.str(v);
  }
  const auto count = 3 * model.params.size() + model.buffers.size();
  w.scalar(static_cast<uint32_t>(count));
  for (const auto& p : model.params) w.tensor("param/" + p.name, p.value);
  for (const auto& p : model.params) w.tensor("adam_m/" + p.name, p.adam_m);
  for (const auto& p : model.params) w.tensor("adam_v/" + p.name, p.adam_v);
  for (const auto& [name, t] : model.buffers) w.tensor("buffer/" + name, t);
  w.finish();
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& model) {
  save_checkpoint(path, model, RunConfig{});
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[sizeof kCheckpointMagic];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = r.scalar<uint16_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  int64_t step = -1;
  const auto n_kv = r.scalar<uint32_t>();
  try {
    KeyValues kv;
    for (uint32_t i = 0; i < n_kv; ++i) {
      std::string k = r.str();
      std::string v = r.str();
      if (k == "optimizer.step")
        step = std::stoll(v);
      else
        kv.emplace_back(std::move(k), std::move(v));
    }
    apply_key_values(ck.config, kv);
    ck.config.model.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("bad configuration in checkpoint: ") + e.what());
  } catch (const std::logic_error&) {
    throw CheckpointError("bad optimizer.step in checkpoint");
  }
  if (step < 0) throw CheckpointError("checkpoint has no optimizer.step");

  // Build an uninitialised skeleton with the right names and shapes.
  ck.model = build_model(ck.config.model, RngStream(0));
  ck.model.step = step;
  std::map<std::string, Tensor*> slots;
  for (auto& p : ck.model.params) {
    p.step = step;
    slots["param/" + p.name] = &p.value;
    slots["adam_m/" + p.name] = &p.adam_m;
    slots["adam_v/" + p.name] = &p.adam_v;
  }
  for (auto& [name, t] : ck.model.buffers) slots["buffer/" + name] = &t;

  const auto n_t = r.scalar<uint32_t>();
  std::set<std::string> filled;
  for (uint32_t i = 0; i < n_t; ++i) {
    const std::string name = r.str();
    const auto rank = r.scalar<uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.scalar<uint32_t>();
    auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError("unexpected tensor " + name);
    if (it->second->shape() != shape)
      throw CheckpointError("tensor " + name + " has shape " + shape_string(shape) +
                            ", model expects " + shape_string(it->second->shape()));
    if (!filled.insert(name).second) throw CheckpointError("duplicate tensor " + name);
    r.bytes(it->second->ptr(), static_cast<size_t>(shape_numel(shape)) * sizeof(float));
  }
  for (const auto& [name, t] : slots)
    if (!filled.count(name)) throw CheckpointError("checkpoint lacks tensor " + name);
  if (!r.at_end()) throw CheckpointError("trailing bytes after checkpoint tensors");
  return ck;
}

}  // namespace fpnseg
