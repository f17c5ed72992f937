// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/checkpoint.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "memescope/error.h"

namespace memescope {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'M', 'M', 'X', 'P'};

template <typename T>
void put(std::string& out, T value) {
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.append(bytes.data(), bytes.size());
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const std::string& what) {
    need(sizeof(T), what);
    std::array<char, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(raw.begin(), raw.end());
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(raw);
  }

  std::string_view take(std::size_t n, const std::string& what) {
    need(n, what);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) {
      throw LoadError("checkpoint is truncated or corrupt: " + std::to_string(bytes_.size()) +
                      " bytes, needed " + std::to_string(n) + " more at offset " +
                      std::to_string(pos_) + " while reading " + what);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
  json header = {{"config", ckpt.config.to_json()},
                 {"vocab", ckpt.vocab.tokens()},
                 {"training",
                  {{"seed", ckpt.meta.seed},
                   {"steps", ckpt.meta.steps},
                   {"batch_size", ckpt.meta.batch_size},
                   {"learning_rate", ckpt.meta.learning_rate},
                   {"final_loss", ckpt.meta.final_loss}}}};
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, tensor] : ckpt.params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put<std::uint64_t>(out, d);
    for (double v : tensor.data()) put<double>(out, v);
  }
  return out;
}

ModelCheckpoint deserialize_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4, "magic") != std::string_view(kMagic, 4)) {
    throw LoadError("not a memescope checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>("format version");
  if (version != kCheckpointVersion) {
    throw LoadError("unsupported checkpoint format version " + std::to_string(version) +
                    " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = in.get<std::uint32_t>("header length");
  const std::string_view header_text = in.take(header_len, "JSON header");

  ModelCheckpoint ckpt;
  try {
    const json header = json::parse(header_text);
    ckpt.config = ModelConfig::from_json(header.at("config"));
    ckpt.vocab = WordPieceVocab(header.at("vocab").get<std::vector<std::string>>());
    const json& t = header.at("training");
    ckpt.meta.seed = t.at("seed").get<std::uint64_t>();
    ckpt.meta.steps = t.at("steps").get<std::size_t>();
    ckpt.meta.batch_size = t.at("batch_size").get<std::size_t>();
    ckpt.meta.learning_rate = t.at("learning_rate").get<double>();
    ckpt.meta.final_loss = t.at("final_loss").get<double>();
    ckpt.config.validate();
  } catch (const json::exception& e) {
    throw LoadError(std::string("checkpoint header is corrupt: ") + e.what());
  } catch (const ValidationError& e) {
    throw LoadError(std::string("checkpoint header is invalid: ") + e.what());
  }
  if (ckpt.vocab.size() != ckpt.config.vocab_size) {
    throw LoadError("checkpoint vocabulary has " + std::to_string(ckpt.vocab.size()) +
                    " tokens but config.vocab_size is " + std::to_string(ckpt.config.vocab_size));
  }

  const std::vector<ParameterSpec> specs = parameter_specs(ckpt.config);
  const auto count = in.get<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>("parameter name length");
    const std::string name(in.take(name_len, "parameter name"));
    auto spec = std::find_if(specs.begin(), specs.end(),
                             [&](const ParameterSpec& s) { return s.name == name; });
    if (spec == specs.end()) {
      throw LoadError("checkpoint parameter '" + name + "' is not part of the configured model");
    }
    const auto rank = in.get<std::uint32_t>("rank of '" + name + "'");
    std::vector<std::size_t> shape;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>("dims of '" + name + "'")));
    }
    if (shape != spec->shape) {
      throw LoadError("checkpoint parameter '" + name + "' has shape " + shape_string(shape) +
                      " but the config implies " + shape_string(spec->shape));
    }
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> data(n);
    for (double& v : data) v = in.get<double>("data of '" + name + "'");
    try {
      ckpt.params.add(name, Tensor(shape, std::move(data)));
    } catch (const ValidationError&) {
      throw LoadError("checkpoint parameter '" + name + "' appears twice");
    }
  }
  for (const auto& spec : specs) {
    if (!ckpt.params.contains(spec.name)) {
      throw LoadError("checkpoint is missing parameter '" + spec.name + "'");
    }
  }
  if (!in.done()) {
    throw LoadError("checkpoint has " + std::to_string(bytes.size() - in.position()) +
                    " unexpected trailing bytes");
  }
  return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing checkpoint " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::string checkpoint_hash(const ModelCheckpoint& ckpt) {
  return content_hash(serialize_checkpoint(ckpt));
}

}  // namespace memescope
