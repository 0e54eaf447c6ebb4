// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#include "meshpose/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace meshpose::train {

namespace {
constexpr char kMagic[8] = {'M', 'P', 'C', 'K', 'P', 'T', '0', '1'};
}

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "save_checkpoint: cannot open " + path);
  os.write(kMagic, 8);
  uint32_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), 4);
  os.write(reinterpret_cast<const char*>(&ck.config_hash), 8);
  os.write(reinterpret_cast<const char*>(&ck.step), 8);
  os.write(reinterpret_cast<const char*>(&ck.adam_g_step), 8);
  os.write(reinterpret_cast<const char*>(&ck.adam_d_step), 8);
  uint32_t count = static_cast<uint32_t>(ck.tensors.size());
  os.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& t : ck.tensors) {
    uint32_t nlen = static_cast<uint32_t>(t.name.size());
    os.write(reinterpret_cast<const char*>(&nlen), 4);
    os.write(t.name.data(), nlen);
    uint8_t dtype = 0;  // f32
    os.write(reinterpret_cast<const char*>(&dtype), 1);
    uint8_t ndim = static_cast<uint8_t>(t.value.rank());
    os.write(reinterpret_cast<const char*>(&ndim), 1);
    for (int d = 0; d < t.value.rank(); ++d) {
      uint64_t dim = static_cast<uint64_t>(t.value.dim(d));
      os.write(reinterpret_cast<const char*>(&dim), 8);
    }
    os.write(reinterpret_cast<const char*>(t.value.data()), sizeof(float) * t.value.numel());
  }
  check(os.good(), "save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  check(is.good() && std::memcmp(magic, kMagic, 8) == 0,
        "load_checkpoint: bad magic in " + path);
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  check(version == 1, "load_checkpoint: unsupported version");
  Checkpoint ck;
  is.read(reinterpret_cast<char*>(&ck.config_hash), 8);
  is.read(reinterpret_cast<char*>(&ck.step), 8);
  is.read(reinterpret_cast<char*>(&ck.adam_g_step), 8);
  is.read(reinterpret_cast<char*>(&ck.adam_d_step), 8);
  uint32_t count = 0;
  is.read(reinterpret_cast<char*>(&count), 4);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t nlen = 0;
    is.read(reinterpret_cast<char*>(&nlen), 4);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    uint8_t dtype = 0, ndim = 0;
    is.read(reinterpret_cast<char*>(&dtype), 1);
    is.read(reinterpret_cast<char*>(&ndim), 1);
    check(dtype == 0, "load_checkpoint: unsupported dtype");
    Shape shape(ndim);
    for (int d = 0; d < ndim; ++d) {
      uint64_t dim = 0;
      is.read(reinterpret_cast<char*>(&dim), 8);
      shape[d] = static_cast<int64_t>(dim);
    }
    auto t = Tensor<float>::zeros(shape);
    is.read(reinterpret_cast<char*>(t.data()), sizeof(float) * t.numel());
    check(static_cast<bool>(is), "load_checkpoint: truncated tensor " + name);
    ck.tensors.push_back({std::move(name), std::move(t)});
  }
  return ck;
}

namespace {

void pack_adam(const std::string& prefix, const NamedParams<float>& params,
               const AdamState<float>& st, std::vector<NamedTensor>& out) {
  for (const auto& [name, p] : params) {
    auto it = st.moments.find(name);
    if (it == st.moments.end()) {
      out.push_back({prefix + ".m." + name, Tensor<float>::zeros(p->shape())});
      out.push_back({prefix + ".v." + name, Tensor<float>::zeros(p->shape())});
    } else {
      out.push_back({prefix + ".m." + name, it->second.m.clone()});
      out.push_back({prefix + ".v." + name, it->second.v.clone()});
    }
  }
}

void unpack_adam(const Checkpoint& ck, const std::string& prefix,
                 const NamedParams<float>& params, AdamState<float>& st) {
  for (const auto& [name, p] : params) {
    const Tensor<float>* m = ck.find(prefix + ".m." + name);
    const Tensor<float>* v = ck.find(prefix + ".v." + name);
    check(m != nullptr && v != nullptr, "checkpoint: missing optimizer state for " + name);
    auto& mo = st.moments[name];
    mo.m = m->clone();
    mo.v = v->clone();
  }
}

}  // namespace

Checkpoint pack_checkpoint(uint64_t config_hash, uint64_t step,
                           const NamedParams<float>& g_params,
                           const NamedParams<float>& d_params, const AdamState<float>& adam_g,
                           const AdamState<float>& adam_d) {
  Checkpoint ck;
  ck.config_hash = config_hash;
  ck.step = step;
  ck.adam_g_step = static_cast<uint64_t>(adam_g.step);
  ck.adam_d_step = static_cast<uint64_t>(adam_d.step);
  for (const auto& [name, p] : g_params) ck.tensors.push_back({name, p->clone()});
  for (const auto& [name, p] : d_params) ck.tensors.push_back({name, p->clone()});
  pack_adam("adam_g", g_params, adam_g, ck.tensors);
  pack_adam("adam_d", d_params, adam_d, ck.tensors);
  return ck;
}

void unpack_checkpoint(const Checkpoint& ck, const NamedParams<float>& g_params,
                       const NamedParams<float>& d_params, AdamState<float>& adam_g,
                       AdamState<float>& adam_d) {
  auto restore = [&](const NamedParams<float>& params) {
    for (const auto& [name, p] : params) {
      const Tensor<float>* t = ck.find(name);
      check(t != nullptr, "checkpoint: missing tensor " + name);
      check(t->shape() == p->shape(), "checkpoint: shape mismatch for " + name + ": stored " +
                                          shape_str(t->shape()) + " vs model " +
                                          shape_str(p->shape()));
      std::memcpy(p->data(), t->data(), sizeof(float) * t->numel());
    }
  };
  restore(g_params);
  restore(d_params);
  adam_g.step = static_cast<int64_t>(ck.adam_g_step);
  adam_d.step = static_cast<int64_t>(ck.adam_d_step);
  unpack_adam(ck, "adam_g", g_params, adam_g);
  unpack_adam(ck, "adam_d", d_params, adam_d);
}

}  // namespace meshpose::train
