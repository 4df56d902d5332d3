#include "mtu/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mtu/image_io.hpp"

namespace mtu {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

constexpr std::array<char, 8> kMagic{'M', 'T', 'U', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint8_t kArrayTag = 1;
constexpr std::uint8_t kTextTag = 2;

class Writer {
 public:
  template <typename V>
  void pod(V v) {
    char buf[sizeof(V)];
    std::memcpy(buf, &v, sizeof(V));
    out_.append(buf, sizeof(V));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint64_t>(s.size()));
    out_.append(s);
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  template <typename V>
  V pod() {
    V v{};
    std::memcpy(&v, take(sizeof(V)), sizeof(V));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    return std::string(take(n), n);
  }
  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw CheckpointError("truncated checkpoint " + origin_);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.pod(Checkpoint::kVersion);
  w.str(serialize_config(ckpt.config));
  w.pod(ckpt.step);
  w.pod(static_cast<std::uint64_t>(ckpt.arrays.size() + ckpt.texts.size()));
  for (const auto& [name, t] : ckpt.arrays) {
    w.pod(kArrayTag);
    w.str(name);
    w.pod(static_cast<std::uint32_t>(t.shape().rank()));
    for (auto d : t.shape().dims()) w.pod(static_cast<std::int64_t>(d));
    w.raw(t.ptr(), t.bytes());
  }
  for (const auto& [name, text] : ckpt.texts) {
    w.pod(kTextTag);
    w.str(name);
    w.str(text);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_file_atomic(path, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Reader r(buf.str(), path.string());

  if (std::memcmp(r.take(kMagic.size()), kMagic.data(), kMagic.size()) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  }
  Checkpoint ckpt;
  ckpt.config = parse_config(r.str());
  ckpt.step = r.pod<std::int64_t>();
  const auto entries = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < entries; ++i) {
    const auto tag = r.pod<std::uint8_t>();
    std::string name = r.str();
    if (tag == kArrayTag) {
      const auto rank = r.pod<std::uint32_t>();
      if (rank > 8) throw CheckpointError("corrupt array header for " + name);
      std::vector<std::int64_t> dims(rank);
      for (auto& d : dims) {
        d = r.pod<std::int64_t>();
        if (d < 0) throw CheckpointError("corrupt array header for " + name);
      }
      Shape shape(std::move(dims));
      auto t = Tensor<float>::uninitialized(shape);
      std::memcpy(t.ptr(), r.take(t.bytes()), t.bytes());
      ckpt.arrays.emplace(std::move(name), std::move(t));
    } else if (tag == kTextTag) {
      ckpt.texts.emplace(std::move(name), r.str());
    } else {
      throw CheckpointError("unknown entry tag in " + path.string());
    }
  }
  if (!r.done()) throw CheckpointError("trailing bytes in " + path.string());
  return ckpt;
}

Checkpoint make_checkpoint(const StackedModel<float>& model, std::int64_t step) {
  Checkpoint ckpt;
  ckpt.config = model.config;
  ckpt.step = step;
  for (const auto& [name, p] : model.named_parameters()) ckpt.arrays.emplace(name, p.value());
  return ckpt;
}

StackedModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = StackedModel<float>::create(ckpt.config, 0);
  std::size_t used = 0;
  for (auto& [name, p] : model.named_parameters()) {
    const auto it = ckpt.arrays.find(name);
    if (it == ckpt.arrays.end()) throw CheckpointError("checkpoint lacks parameter " + name);
    if (!(it->second.shape() == p.shape())) {
      throw CheckpointError("parameter " + name + " has shape " + it->second.shape().str() + ", model expects " + p.shape().str());
    }
    p.value() = it->second;
    ++used;
  }
  std::size_t weight_arrays = 0;
  for (const auto& [name, t] : ckpt.arrays) weight_arrays += name.rfind("optim.", 0) != 0;
  if (weight_arrays != used) throw CheckpointError("checkpoint holds parameters the model does not have");
  return model;
}

StackedModel<float> model_from_checkpoint(const Checkpoint& ckpt, const ModelConfig& expected) {
  if (!(ckpt.config == expected)) {
    throw CheckpointError("checkpoint config does not match:\n" + serialize_config(ckpt.config) + "expected:\n" +
                          serialize_config(expected));
  }
  return model_from_checkpoint(ckpt);
}

StackedModel<float> load_model(const std::filesystem::path& path) { return model_from_checkpoint(load_checkpoint(path)); }

}  // namespace mtu
