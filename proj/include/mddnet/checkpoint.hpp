#pragma once

// Checkpoint layout: magic "MDDC", u32 version, u32 array count, then per
// array u32 name length, name bytes, u8 kind and one MDDF block. A JSON
// sidecar (<path>.json) carries the full training configuration.

#include "mddnet/config.hpp"
#include "mddnet/data.hpp"
#include "mddnet/model.hpp"

#include <fstream>

namespace mddnet {

inline constexpr std::array<char, 4> kCheckpointMagic{'M', 'D', 'D', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline fs::path sidecar_path(const fs::path& ckpt) { return fs::path(ckpt.string() + ".json"); }

template <typename T>
void save_parameters(const ParameterSet<T>& ps, const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  os.write(kCheckpointMagic.data(), 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(ps.size()));
  for (const auto& p : ps) {
    detail::put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const char kind = static_cast<char>(p.kind);
    os.write(&kind, 1);
    write_mddf_block(os, p.value.template cast<float>());
  }
  if (!os) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

/// Fills every array of `ps` from the file; names and shapes must match exactly.
template <typename T>
void load_parameters(ParameterSet<T>& ps, const fs::path& path) {
  auto buf = detail::read_all(path);
  if (buf.size() < 12 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), buf.begin()))
    throw Error(ErrorCode::IoError, path.string() + " is not a checkpoint");
  if (detail::get_u32(&buf[4]) != kCheckpointVersion)
    throw Error(ErrorCode::IoError, path.string() + ": unsupported checkpoint version");
  const std::uint32_t count = detail::get_u32(&buf[8]);
  std::size_t pos = 12;
  std::size_t seen = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (buf.size() < pos + 4) throw Error(ErrorCode::IoError, path.string() + ": truncated");
    const std::uint32_t len = detail::get_u32(&buf[pos]);
    pos += 4;
    if (buf.size() < pos + len + 1) throw Error(ErrorCode::IoError, path.string() + ": truncated");
    std::string name(buf.begin() + static_cast<std::ptrdiff_t>(pos), buf.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len + 1;  // name, kind byte
    Matrix<float> m = read_mddf_block(buf, pos, path.string() + ":" + name);
    if (!ps.contains(name)) throw Error(ErrorCode::ShapeMismatch, "checkpoint array '" + name + "' not in model");
    auto& dst = ps.value(ps.index_of(name));
    if (dst.rows() != m.rows() || dst.cols() != m.cols())
      throw Error(ErrorCode::ShapeMismatch, "checkpoint array '" + name + "' has shape " + std::to_string(m.rows()) +
                                                "x" + std::to_string(m.cols()) + ", model expects " +
                                                std::to_string(dst.rows()) + "x" + std::to_string(dst.cols()));
    dst = m.cast<T>();
    ++seen;
  }
  if (seen != ps.size())
    throw Error(ErrorCode::ShapeMismatch, "checkpoint holds " + std::to_string(seen) + " arrays, model has " +
                                              std::to_string(ps.size()));
}

template <typename T>
void save_checkpoint(const MddNet<T>& model, const TrainConfig& cfg, const fs::path& path) {
  save_parameters(model.params(), path);
  std::ofstream os(sidecar_path(path), std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot write " + sidecar_path(path).string());
  os << to_json(cfg).dump(2) << '\n';
}

inline TrainConfig load_checkpoint_config(const fs::path& path) {
  const auto side = sidecar_path(path);
  if (!fs::exists(side)) throw Error(ErrorCode::MissingFile, "checkpoint sidecar " + side.string() + " missing");
  std::ifstream in(side);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad checkpoint sidecar: ") + e.what());
  }
  return train_config_from_json(j);
}

template <typename T>
MddNet<T> load_checkpoint(const fs::path& path, TrainConfig* cfg_out = nullptr) {
  TrainConfig cfg = load_checkpoint_config(path);
  MddNet<T> model(cfg.model);
  load_parameters(model.params(), path);
  if (cfg_out) *cfg_out = cfg;
  return model;
}

}  // namespace mddnet
