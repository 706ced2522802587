// grdn/checkpoint.hpp

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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "grdn/network.hpp"

namespace grdn {

// "GRDN" container: magic, u32 LE format version, u32 LE header length,
// UTF-8 JSON header, then payload doubles little-endian. The JSON header
// always carries a "kind" field ("mlp", "rbm", "gradnet").
inline constexpr char kCheckpointMagic[4] = {'G', 'R', 'D', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Container {
  std::string kind;
  nlohmann::json header;  // includes "kind"
  std::vector<double> payload;
};

std::vector<std::uint8_t> serialize_container(const Container &c);
Container deserialize_container(const std::vector<std::uint8_t> &bytes);

void save_container(const std::string &path, const Container &c);
Container load_container(const std::string &path);

/// FNV-1a 64-bit, used as the content hash embedded in downstream artifacts.
std::uint64_t fnv1a64(const void *data, std::size_t len);
std::string hash_hex(std::uint64_t h);
/// Hash of a file's bytes, hex-encoded. Throws ParseError if unreadable.
std::string file_hash_hex(const std::string &path);

// JSON <-> domain types for headers and configs.
void to_json(nlohmann::json &j, const NetworkSpec &s);
void from_json(const nlohmann::json &j, NetworkSpec &s);
void to_json(nlohmann::json &j, const ParamLayout &l);
void from_json(const nlohmann::json &j, ParamLayout &l);

struct MlpCheckpoint {
  NetworkSpec spec;
  ParamLayout layout;
  ParamVector params;
  nlohmann::json meta;
};

/// kind "mlp"; meta is merged into the header under "meta".
void save_mlp(const std::string &path, const NetworkSpec &spec,
              const ParamLayout &layout, const ParamVector &params,
              const nlohmann::json &meta = nlohmann::json::object());
MlpCheckpoint load_mlp(const std::string &path);

}  // namespace grdn
