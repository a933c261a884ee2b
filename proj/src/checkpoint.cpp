// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cdse/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace cdse {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'D', 'T', 'N'};

void AppendU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void AppendU64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t ParseU32(const unsigned char* p) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

uint64_t ParseU64(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void AppendTensorBytes(std::string& out, const Tensor<float>& t) {
  // Little-endian float32; this build targets little-endian hosts, so the
  // raw buffer is already in wire order.
  const char* p = reinterpret_cast<const char*>(t.data());
  out.append(p, static_cast<size_t>(t.numel()) * 4);
}

json TensorTableEntry(const std::string& name, const Tensor<float>& t,
                      uint64_t offset) {
  json e;
  e["name"] = name;
  e["dtype"] = "f32";
  e["shape"] = t.shape();
  e["offset"] = offset;
  return e;
}

}  // namespace

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  // Assemble the tensor table: model parameters first (sorted by name via
  // std::map), then optimizer moments under reserved prefixes.
  json table = json::array();
  std::string data;
  uint64_t offset = 0;
  auto add = [&](const std::string& name, const Tensor<float>& t) {
    table.push_back(TensorTableEntry(name, t, offset));
    AppendTensorBytes(data, t);
    offset += static_cast<uint64_t>(t.numel()) * 4;
  };
  for (const auto& [name, t] : ckpt.tensors) add(name, t);
  if (ckpt.optimizer) {
    for (const auto& [name, t] : ckpt.optimizer->first_moment)
      add("opt.m." + name, t);
    for (const auto& [name, t] : ckpt.optimizer->second_moment)
      add("opt.v." + name, t);
  }

  json header;
  header["config"] = json::parse(SystemConfigToJson(ckpt.config));
  header["epoch"] = ckpt.epoch;
  header["rng_seed"] = ckpt.rng_seed;
  header["tensors"] = table;
  if (ckpt.optimizer) {
    header["optimizer"] = json{{"type", "adam"},
                               {"lr", ckpt.optimizer->hyper.lr},
                               {"beta1", ckpt.optimizer->hyper.beta1},
                               {"beta2", ckpt.optimizer->hyper.beta2},
                               {"eps", ckpt.optimizer->hyper.eps},
                               {"step", ckpt.optimizer->step}};
  }
  const std::string header_text = header.dump();

  std::string out;
  out.append(kMagic, 4);
  AppendU32(out, kCheckpointVersion);
  AppendU64(out, static_cast<uint64_t>(header_text.size()));
  out.append(header_text);
  out.append(data);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    CDSE_CHECK(f.good(), ErrorKind::kIo, "cannot open ", tmp, " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    CDSE_CHECK(f.good(), ErrorKind::kIo, "write failed for ", tmp);
  }
  CDSE_CHECK(std::rename(tmp.c_str(), path.c_str()) == 0, ErrorKind::kIo,
             "cannot move ", tmp, " to ", path);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CDSE_CHECK(in.good(), ErrorKind::kIo, "cannot open ", path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  CDSE_CHECK(bytes.size() >= 16 && std::memcmp(p, kMagic, 4) == 0,
             ErrorKind::kParse, path, ": not a checkpoint file");
  const uint32_t version = ParseU32(p + 4);
  CDSE_CHECK(version == kCheckpointVersion, ErrorKind::kFormat, path,
             ": unsupported checkpoint version ", version, " (expected ",
             kCheckpointVersion, ")");
  const uint64_t header_len = ParseU64(p + 8);
  CDSE_CHECK(16 + header_len <= bytes.size(), ErrorKind::kParse, path,
             ": truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(16, header_len));
  } catch (const json::exception& e) {
    ThrowF(ErrorKind::kParse, path, ": corrupt header: ", e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = SystemConfigFromJson(header.at("config").dump());
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.rng_seed = header.at("rng_seed").get<uint64_t>();
    if (header.contains("optimizer")) {
      OptimizerSnapshot opt;
      const json& o = header.at("optimizer");
      opt.hyper.lr = o.at("lr").get<double>();
      opt.hyper.beta1 = o.at("beta1").get<double>();
      opt.hyper.beta2 = o.at("beta2").get<double>();
      opt.hyper.eps = o.at("eps").get<double>();
      opt.step = o.at("step").get<int64_t>();
      ckpt.optimizer = std::move(opt);
    }
    const size_t data_start = 16 + static_cast<size_t>(header_len);
    for (const json& e : header.at("tensors")) {
      const std::string name = e.at("name").get<std::string>();
      CDSE_CHECK(e.at("dtype").get<std::string>() == "f32",
                 ErrorKind::kFormat, path, ": tensor ", name,
                 " has unsupported dtype");
      Shape shape = e.at("shape").get<Shape>();
      const uint64_t off = e.at("offset").get<uint64_t>();
      const uint64_t len = static_cast<uint64_t>(NumelOf(shape)) * 4;
      CDSE_CHECK(data_start + off + len <= bytes.size(), ErrorKind::kParse,
                 path, ": tensor ", name, " exceeds file size");
      std::vector<float> values(static_cast<size_t>(NumelOf(shape)));
      std::memcpy(values.data(), bytes.data() + data_start + off,
                  static_cast<size_t>(len));
      Tensor<float> t(shape, std::move(values));
      t.CheckFinite("checkpoint tensor");
      std::map<std::string, Tensor<float>>* dest = &ckpt.tensors;
      std::string key = name;
      if (name.rfind("opt.m.", 0) == 0) {
        CDSE_CHECK(ckpt.optimizer.has_value(), ErrorKind::kParse, path,
                   ": moment tensor without optimizer header");
        dest = &ckpt.optimizer->first_moment;
        key = name.substr(6);
      } else if (name.rfind("opt.v.", 0) == 0) {
        CDSE_CHECK(ckpt.optimizer.has_value(), ErrorKind::kParse, path,
                   ": moment tensor without optimizer header");
        dest = &ckpt.optimizer->second_moment;
        key = name.substr(6);
      }
      CDSE_CHECK(dest->emplace(key, std::move(t)).second, ErrorKind::kParse,
                 path, ": duplicate tensor ", name);
    }
  } catch (const json::exception& e) {
    ThrowF(ErrorKind::kParse, path, ": malformed header fields: ", e.what());
  }
  return ckpt;
}

}  // namespace cdse
