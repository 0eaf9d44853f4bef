#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmctr/config.hpp"
#include "mmctr/embedding.hpp"
#include "mmctr/error.hpp"
#include "mmctr/model.hpp"
#include "mmctr/trainer/adam.hpp"

namespace mmctr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

inline constexpr std::array<char, 8> kCheckpointMagic{'M', 'M', 'C', 'T', 'R', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const NamedTensor&) const = default;
};

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<NamedTensor> moments;  // "m/<param>" then "v/<param>" per parameter

  bool operator==(const OptimizerState&) const = default;
};

/// Layout (all integers little-endian):
///   magic[8] u32 version
///   u64 config_len, config text
///   u64 n_tensors, then per tensor: u32 name_len, name, u32 rank,
///     u64 dims[rank], f32 values[prod(dims)]
///   u8 has_optimizer; if 1: u64 step, u64 n_moments, moments as tensors
struct Checkpoint {
  std::string config_text;
  std::vector<NamedTensor> tensors;
  std::optional<OptimizerState> optimizer;

  const NamedTensor* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }

  bool operator==(const Checkpoint&) const = default;
};

namespace ckpt_detail {

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

inline void put_tensor(std::ostream& out, const NamedTensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
  out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) put<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(float)));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  template <typename U>
  U get(const char* what) {
    U v;
    bytes(&v, sizeof(U), what);
    return v;
  }

  // Guards allocations against garbage lengths in a corrupt file.
  template <typename U>
  U bounded(U v, U limit, const char* what) {
    if (v > limit) throw CheckpointError(std::string("checkpoint field out of range: ") + what);
    return v;
  }

  NamedTensor tensor() {
    NamedTensor t;
    const auto name_len = bounded<std::uint32_t>(get<std::uint32_t>("tensor name length"), 1u << 16, "tensor name length");
    t.name.resize(name_len);
    bytes(t.name.data(), name_len, "tensor name");
    const auto rank = bounded<std::uint32_t>(get<std::uint32_t>("tensor rank"), 8, "tensor rank");
    std::uint64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = bounded<std::uint64_t>(get<std::uint64_t>("tensor dims"), std::uint64_t{1} << 34, "tensor dim");
      t.shape.push_back(static_cast<std::size_t>(d));
      numel *= d;
      bounded<std::uint64_t>(numel, std::uint64_t{1} << 34, "tensor size");
    }
    t.values.resize(static_cast<std::size_t>(numel));
    bytes(t.values.data(), t.values.size() * sizeof(float), ("payload of '" + t.name + "'").c_str());
    return t;
  }

 private:
  std::istream& in_;
};

}  // namespace ckpt_detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  using ckpt_detail::put;
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, ck.config_text.size());
  out.write(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
  put<std::uint64_t>(out, ck.tensors.size());
  for (const auto& t : ck.tensors) ckpt_detail::put_tensor(out, t);
  put<std::uint8_t>(out, ck.optimizer ? 1 : 0);
  if (ck.optimizer) {
    put<std::uint64_t>(out, ck.optimizer->step);
    put<std::uint64_t>(out, ck.optimizer->moments.size());
    for (const auto& t : ck.optimizer->moments) ckpt_detail::put_tensor(out, t);
  }
}

inline Checkpoint read_checkpoint(std::istream& in) {
  ckpt_detail::Reader r(in);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kCheckpointMagic) throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  const auto cfg_len = r.bounded<std::uint64_t>(r.get<std::uint64_t>("config length"), 1u << 24, "config length");
  ck.config_text.resize(static_cast<std::size_t>(cfg_len));
  r.bytes(ck.config_text.data(), ck.config_text.size(), "config");
  const auto n = r.bounded<std::uint64_t>(r.get<std::uint64_t>("tensor count"), 1u << 20, "tensor count");
  for (std::uint64_t i = 0; i < n; ++i) ck.tensors.push_back(r.tensor());
  const auto has_opt = r.get<std::uint8_t>("optimizer flag");
  if (has_opt > 1) throw CheckpointError("checkpoint optimizer flag is corrupt");
  if (has_opt) {
    OptimizerState st;
    st.step = r.get<std::uint64_t>("optimizer step");
    const auto nm = r.bounded<std::uint64_t>(r.get<std::uint64_t>("moment count"), 1u << 21, "moment count");
    for (std::uint64_t i = 0; i < nm; ++i) st.moments.push_back(r.tensor());
    ck.optimizer = std::move(st);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  write_checkpoint(out, ck);
  if (!out) throw CheckpointError("write failed for checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

namespace ckpt_detail {

template <typename T>
NamedTensor to_named(const std::string& name, const BasicTensor<T>& t) {
  return {name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())};
}

inline NamedTensor codes_tensor(const std::string& name, const std::vector<std::int64_t>& codes) {
  NamedTensor t{name, {codes.size()}, {}};
  for (auto c : codes) {
    if (c < 0 || c > (1 << 24)) throw CheckpointError("categorical code " + std::to_string(c) + " is not storable");
    t.values.push_back(static_cast<float>(c));
  }
  return t;
}

inline const NamedTensor& require(const Checkpoint& ck, const std::string& name) {
  const auto* t = ck.find(name);
  if (!t) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
  return *t;
}

}  // namespace ckpt_detail

/// Frozen item data, stored alongside the parameters so a checkpoint is
/// self-contained.
inline void append_catalog(Checkpoint& ck, const ItemCatalog& cat) {
  std::vector<std::int64_t> known(cat.known.begin(), cat.known.end());
  ck.tensors.push_back(ckpt_detail::codes_tensor("frozen.known", known));
  for (std::size_t f = 0; f < cat.n_cat(); ++f) {
    ck.tensors.push_back(ckpt_detail::codes_tensor("frozen.cat" + std::to_string(f), cat.cat_codes[f]));
  }
  if (cat.d_mm > 0) ck.tensors.push_back({"frozen.mm", {cat.vocab, cat.d_mm}, cat.mm});
}

inline ItemCatalog read_catalog(const Checkpoint& ck, std::size_t n_cat, std::size_t d_mm) {
  ItemCatalog cat;
  const auto& known = ckpt_detail::require(ck, "frozen.known");
  cat.vocab = known.values.size();
  cat.d_mm = d_mm;
  for (float v : known.values) cat.known.push_back(v != 0.0f ? 1 : 0);
  for (std::size_t f = 0; f < n_cat; ++f) {
    const auto& col = ckpt_detail::require(ck, "frozen.cat" + std::to_string(f));
    if (col.values.size() != cat.vocab) throw CheckpointError("frozen.cat" + std::to_string(f) + " has the wrong length");
    std::vector<std::int64_t> codes;
    for (float v : col.values) codes.push_back(static_cast<std::int64_t>(v));
    cat.cat_codes.push_back(std::move(codes));
  }
  if (d_mm > 0) {
    const auto& mm = ckpt_detail::require(ck, "frozen.mm");
    if (mm.shape != Shape{cat.vocab, d_mm}) {
      throw CheckpointError("frozen.mm: checkpoint " + shape_str(mm.shape) + " vs expected " +
                            shape_str({cat.vocab, d_mm}));
    }
    cat.mm = mm.values;
  }
  return cat;
}

template <typename T>
Checkpoint make_checkpoint(const CtrModel<T>& model, const Adam<T>* adam = nullptr) {
  Checkpoint ck;
  ck.config_text = to_text(model.config());
  for (const auto& p : model.params().entries()) ck.tensors.push_back(ckpt_detail::to_named(p.name, p.tensor));
  append_catalog(ck, model.catalog());
  if (adam) {
    OptimizerState st;
    st.step = adam->steps();
    const auto& entries = model.params().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& m = adam->first_moments()[i];
      const auto& v = adam->second_moments()[i];
      st.moments.push_back({"m/" + entries[i].name, entries[i].tensor.shape(), std::vector<float>(m.begin(), m.end())});
      st.moments.push_back({"v/" + entries[i].name, entries[i].tensor.shape(), std::vector<float>(v.begin(), v.end())});
    }
    ck.optimizer = std::move(st);
  }
  return ck;
}

/// Copies checkpoint values into `store`; every parameter must be present
/// with an identical shape.
template <typename T>
void load_params(ParamStore<T>& store, const Checkpoint& ck) {
  for (auto& p : store.entries()) {
    const auto* t = ck.find(p.name);
    if (!t) throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
    if (t->shape != p.tensor.shape()) {
      throw CheckpointError("shape mismatch for '" + p.name + "': checkpoint " + shape_str(t->shape) + " vs model " +
                            shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(t->values[i]);
  }
}

template <typename T>
void load_adam(Adam<T>& adam, const ParamStore<T>& store, const Checkpoint& ck) {
  if (!ck.optimizer) throw CheckpointError("checkpoint carries no optimizer state");
  const auto& entries = store.entries();
  if (ck.optimizer->moments.size() != 2 * entries.size()) throw CheckpointError("optimizer state has the wrong size");
  std::vector<std::vector<double>> m, v;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& mt = ck.optimizer->moments[2 * i];
    const auto& vt = ck.optimizer->moments[2 * i + 1];
    if (mt.name != "m/" + entries[i].name || vt.name != "v/" + entries[i].name) {
      throw CheckpointError("optimizer state does not match parameter '" + entries[i].name + "'");
    }
    m.emplace_back(mt.values.begin(), mt.values.end());
    v.emplace_back(vt.values.begin(), vt.values.end());
  }
  adam.restore(ck.optimizer->step, std::move(m), std::move(v));
}

/// Rebuilds the model a checkpoint describes, parameters included.
template <typename T>
std::unique_ptr<CtrModel<T>> restore_model(const Checkpoint& ck) {
  TrainConfig cfg;
  try {
    cfg = parse_config_text(ck.config_text, "checkpoint config");
  } catch (const ConfigError& e) {
    throw CheckpointError(e.what());
  }
  auto catalog = std::make_shared<const ItemCatalog>(read_catalog(ck, cfg.cat_vocab.size(), cfg.d_mm));
  auto model = std::make_unique<CtrModel<T>>(cfg, std::move(catalog));
  load_params(model->params(), ck);
  return model;
}

}  // namespace mmctr
