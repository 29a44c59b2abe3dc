// Copyright 2026 The sfadapt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sfadapt/model/snapshot.hpp"

#include <bit>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sfadapt/errors.hpp"

namespace sfadapt::model {

namespace {

constexpr char kMagic[8] = {'S', 'F', 'A', 'D', 'C', 'K', 'P', 'T'};

template <class U>
void put_le(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  os.write(buf, sizeof(U));
}

template <class U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw DataError("checkpoint: unexpected end of file");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

std::string shape_str(const std::vector<int64_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

}  // namespace

const ParamEntry* ParamSnapshot::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::size_t ParamSnapshot::num_values() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.values.size();
  return n;
}

void check_compatible(const ParamSnapshot& reference, const ParamSnapshot& other) {
  std::set<std::string> ref_names, other_names;
  for (const auto& e : reference.entries) ref_names.insert(e.name);
  for (const auto& e : other.entries) other_names.insert(e.name);

  std::vector<std::string> missing, extra, reshaped;
  for (const auto& n : ref_names) {
    if (!other_names.count(n)) missing.push_back(n);
  }
  for (const auto& n : other_names) {
    if (!ref_names.count(n)) extra.push_back(n);
  }
  for (const auto& e : reference.entries) {
    const ParamEntry* o = other.find(e.name);
    if (o && (o->shape != e.shape || o->values.size() != e.values.size())) {
      reshaped.push_back(e.name + " " + shape_str(e.shape) + " vs " +
                         shape_str(o->shape));
    }
  }
  bool order_ok = reference.entries.size() == other.entries.size();
  for (std::size_t i = 0; order_ok && i < reference.entries.size(); ++i) {
    order_ok = reference.entries[i].name == other.entries[i].name;
  }
  if (missing.empty() && extra.empty() && reshaped.empty() && order_ok) return;

  std::ostringstream msg;
  msg << "architecture mismatch";
  auto list = [&](const char* what, const std::vector<std::string>& v) {
    if (v.empty()) return;
    msg << "; " << what << ":";
    for (const auto& s : v) msg << " " << s;
  };
  list("missing", missing);
  list("extra", extra);
  list("shape", reshaped);
  if (missing.empty() && extra.empty() && !order_ok) msg << "; entry order differs";
  throw ArchitectureMismatch(msg.str());
}

void save_checkpoint(const ParamSnapshot& snap, const std::filesystem::path& path,
                     StorageType storage) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open " + path.string() + " for writing");

  nlohmann::json meta = {{"architecture", snap.architecture},
                         {"iteration", snap.iteration},
                         {"seed", snap.seed}};
  const std::string meta_str = meta.dump();

  os.write(kMagic, sizeof(kMagic));
  put_le<uint32_t>(os, kCheckpointVersion);
  put_le<uint32_t>(os, static_cast<uint32_t>(meta_str.size()));
  os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  put_le<uint32_t>(os, static_cast<uint32_t>(snap.entries.size()));
  for (const auto& e : snap.entries) {
    put_le<uint32_t>(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_le<uint8_t>(os, static_cast<uint8_t>(storage));
    put_le<uint32_t>(os, static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) put_le<uint64_t>(os, static_cast<uint64_t>(d));
    for (double v : e.values) {
      if (storage == StorageType::kFloat64) {
        put_le<uint64_t>(os, std::bit_cast<uint64_t>(v));
      } else {
        put_le<uint32_t>(os, std::bit_cast<uint32_t>(static_cast<float>(v)));
      }
    }
  }
  if (!os) throw DataError("checkpoint: write failed for " + path.string());
}

ParamSnapshot load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path.string());

  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) ||
      !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw DataError("checkpoint: bad magic in " + path.string());
  }
  const auto version = get_le<uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::string meta_str(get_le<uint32_t>(is), '\0');
  if (!is.read(meta_str.data(), static_cast<std::streamsize>(meta_str.size()))) {
    throw DataError("checkpoint: truncated metadata");
  }
  ParamSnapshot snap;
  try {
    const auto meta = nlohmann::json::parse(meta_str);
    snap.architecture = meta.at("architecture").get<std::string>();
    snap.iteration = meta.at("iteration").get<int64_t>();
    snap.seed = meta.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
  }

  const auto count = get_le<uint32_t>(is);
  snap.entries.resize(count);
  for (auto& e : snap.entries) {
    e.name.assign(get_le<uint32_t>(is), '\0');
    if (!is.read(e.name.data(), static_cast<std::streamsize>(e.name.size()))) {
      throw DataError("checkpoint: truncated entry name");
    }
    const auto storage = static_cast<StorageType>(get_le<uint8_t>(is));
    if (storage != StorageType::kFloat64 && storage != StorageType::kFloat32) {
      throw DataError("checkpoint: unknown storage type for " + e.name);
    }
    e.shape.resize(get_le<uint32_t>(is));
    std::size_t numel = 1;
    for (auto& d : e.shape) {
      d = static_cast<int64_t>(get_le<uint64_t>(is));
      if (d < 0) throw DataError("checkpoint: negative dimension in " + e.name);
      numel *= static_cast<std::size_t>(d);
    }
    e.values.resize(numel);
    for (auto& v : e.values) {
      v = storage == StorageType::kFloat64
              ? std::bit_cast<double>(get_le<uint64_t>(is))
              : static_cast<double>(std::bit_cast<float>(get_le<uint32_t>(is)));
    }
  }
  return snap;
}

}  // namespace sfadapt::model
