// grdn/checkpoint.cpp

// Copyright 2026  The grdn authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "grdn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "grdn/errors.hpp"

namespace grdn {

static void put_u32le(std::vector<std::uint8_t> &out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

static std::uint32_t get_u32le(const std::uint8_t *p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

static void put_f64le(std::vector<std::uint8_t> &out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

static double get_f64le(const std::uint8_t *p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

std::vector<std::uint8_t> serialize_container(const Container &c) {
  nlohmann::json header = c.header;
  header["kind"] = c.kind;
  const std::string hs = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(12 + hs.size() + 8 * c.payload.size());
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 4);
  put_u32le(out, kCheckpointVersion);
  put_u32le(out, static_cast<std::uint32_t>(hs.size()));
  out.insert(out.end(), hs.begin(), hs.end());
  for (double d : c.payload) put_f64le(out, d);
  return out;
}

Container deserialize_container(const std::vector<std::uint8_t> &bytes) {
  if (bytes.size() < 12) throw ParseError("container truncated before header", bytes.size());
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw ParseError("bad container magic, expected \"GRDN\"", 0);
  const std::uint32_t version = get_u32le(bytes.data() + 4);
  if (version != kCheckpointVersion)
    throw ParseError("unsupported container version " + std::to_string(version), 4);
  const std::uint32_t hlen = get_u32le(bytes.data() + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(hlen))
    throw ParseError("container truncated inside JSON header", bytes.size());
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("container header is not valid JSON: ") + e.what(), 12);
  }
  if (!c.header.contains("kind") || !c.header["kind"].is_string())
    throw ParseError("container header missing \"kind\"", 12);
  c.kind = c.header["kind"].get<std::string>();
  const std::size_t body = bytes.size() - 12 - hlen;
  if (body % 8 != 0)
    throw ParseError("container payload is not a whole number of doubles",
                     12 + hlen);
  c.payload.resize(body / 8);
  const std::uint8_t *p = bytes.data() + 12 + hlen;
  for (std::size_t i = 0; i < c.payload.size(); ++i) c.payload[i] = get_f64le(p + 8 * i);
  return c;
}

void save_container(const std::string &path, const Container &c) {
  const std::vector<std::uint8_t> bytes = serialize_container(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ParseError("cannot open " + path + " for writing", 0);
  f.write(reinterpret_cast<const char *>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ParseError("short write to " + path, bytes.size());
}

static std::vector<std::uint8_t> read_file(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path, 0);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

Container load_container(const std::string &path) {
  return deserialize_container(read_file(path));
}

std::uint64_t fnv1a64(const void *data, std::size_t len) {
  const std::uint8_t *p = static_cast<const std::uint8_t *>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

std::string file_hash_hex(const std::string &path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return hash_hex(fnv1a64(bytes.data(), bytes.size()));
}

void to_json(nlohmann::json &j, const NetworkSpec &s) {
  j = nlohmann::json{{"input_dim", s.input_dim},
                     {"hidden_dims", s.hidden_dims},
                     {"num_classes", s.num_classes},
                     {"activation", "relu"},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json &j, NetworkSpec &s) {
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  s.num_classes = j.at("num_classes").get<int>();
  if (j.at("activation").get<std::string>() != "relu")
    throw ConfigError("unsupported activation in checkpoint header");
  s.activation = Activation::relu;
  s.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(nlohmann::json &j, const ParamLayout &l) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerRange &r : l.layers)
    layers.push_back({{"layer", r.layer},
                      {"rows", r.rows},
                      {"cols", r.cols},
                      {"bias_len", r.bias_len},
                      {"begin", r.begin},
                      {"end", r.end}});
  j = nlohmann::json{{"layers", layers}, {"total", l.total}};
}

void from_json(const nlohmann::json &j, ParamLayout &l) {
  l.layers.clear();
  for (const nlohmann::json &jr : j.at("layers")) {
    LayerRange r;
    r.layer = jr.at("layer").get<int>();
    r.rows = jr.at("rows").get<std::size_t>();
    r.cols = jr.at("cols").get<std::size_t>();
    r.bias_len = jr.at("bias_len").get<std::size_t>();
    r.begin = jr.at("begin").get<std::size_t>();
    r.end = jr.at("end").get<std::size_t>();
    l.layers.push_back(r);
  }
  l.total = j.at("total").get<std::size_t>();
  l.validate();
}

void save_mlp(const std::string &path, const NetworkSpec &spec,
              const ParamLayout &layout, const ParamVector &params,
              const nlohmann::json &meta) {
  if (params.size() != layout.total)
    throw ConfigError("save_mlp: parameter count does not match layout");
  Container c;
  c.kind = "mlp";
  c.header["spec"] = spec;
  c.header["layout"] = layout;
  if (!meta.is_null() && !meta.empty()) c.header["meta"] = meta;
  c.payload = params;
  save_container(path, c);
}

MlpCheckpoint load_mlp(const std::string &path) {
  Container c = load_container(path);
  if (c.kind != "mlp")
    throw ParseError("expected an \"mlp\" checkpoint, found kind \"" + c.kind + "\"", 12);
  MlpCheckpoint ck;
  ck.spec = c.header.at("spec").get<NetworkSpec>();
  ck.layout = c.header.at("layout").get<ParamLayout>();
  ck.meta = c.header.value("meta", nlohmann::json::object());
  ck.params = std::move(c.payload);
  if (ck.params.size() != ck.layout.total)
    throw ParseError("payload length does not match layout total", 12);
  const ParamLayout expect = ParamLayout::from_spec(ck.spec);
  if (expect.total != ck.layout.total)
    throw ParseError("layout disagrees with network spec", 12);
  return ck;
}

}  // namespace grdn
