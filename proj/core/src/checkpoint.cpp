#include "trackforge/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

namespace trackforge {

namespace {

constexpr char kMagic[8] = {'T', 'F', 'C', 'K', 'P', 'T', '1', '\n'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& value) {
  write_u32(out, uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  write_u32(out, uint32_t(value.rows()));
  write_u32(out, uint32_t(value.cols()));
  std::vector<float> buf(size_t(value.size()));
  size_t k = 0;
  for (Eigen::Index i = 0; i < value.rows(); ++i)
    for (Eigen::Index j = 0; j < value.cols(); ++j) buf[k++] = float(value(i, j));
  out.write(reinterpret_cast<const char*>(buf.data()),
            std::streamsize(buf.size() * sizeof(float)));
}

nlohmann::json config_json(const NetConfig& c) {
  return {{"depth", c.depth},
          {"width", c.width},
          {"heads", c.heads},
          {"feature_dim", c.feature_dim},
          {"t_cond", c.t_cond},
          {"horizon", c.horizon},
          {"hist_embed_dim", c.hist_embed_dim},
          {"scale_v", c.scale_v},
          {"scale_o", c.scale_o}};
}

NetConfig config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.depth = j.at("depth");
  c.width = j.at("width");
  c.heads = j.at("heads");
  c.feature_dim = j.at("feature_dim");
  c.t_cond = j.at("t_cond");
  c.horizon = j.at("horizon");
  c.hist_embed_dim = j.at("hist_embed_dim");
  c.scale_v = j.at("scale_v");
  c.scale_o = j.at("scale_o");
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const ModelParams& ema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_u32(out, kVersion);
  std::string cfg = config_json(params.config).dump();
  write_u32(out, uint32_t(cfg.size()));
  out.write(cfg.data(), std::streamsize(cfg.size()));

  uint32_t count = 0;
  params.for_each_tensor([&](const Tensor&) { ++count; });
  write_u32(out, count * 2);
  params.for_each_tensor([&](const Tensor& t) { write_tensor(out, t.name, t.value); });
  ema.for_each_tensor([&](const Tensor& t) { write_tensor(out, "ema/" + t.name, t.value); });
  if (!out) throw DataError("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError("load_checkpoint: bad magic in " + path.string());
  if (read_u32(in) != kVersion) throw DataError("load_checkpoint: unsupported format version");
  uint32_t cfg_len = read_u32(in);
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), cfg_len);
  NetConfig config = config_from_json(nlohmann::json::parse(cfg));

  std::map<std::string, Eigen::MatrixXd> tensors;
  uint32_t count = read_u32(in);
  for (uint32_t k = 0; k < count; ++k) {
    uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint32_t rows = read_u32(in), cols = read_u32(in);
    std::vector<float> buf(size_t(rows) * cols);
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
    if (!in) throw DataError("load_checkpoint: truncated tensor " + name);
    Eigen::MatrixXd m(rows, cols);
    size_t idx = 0;
    for (uint32_t i = 0; i < rows; ++i)
      for (uint32_t j = 0; j < cols; ++j) m(i, j) = double(buf[idx++]);
    tensors[name] = std::move(m);
  }

  Checkpoint ck{init_params(config, 0), init_params(config, 0)};
  auto assign = [&](ModelParams& p, const std::string& prefix) {
    p.for_each_tensor([&](Tensor& t) {
      auto it = tensors.find(prefix + t.name);
      if (it == tensors.end()) throw DataError("load_checkpoint: missing tensor " + t.name);
      if (it->second.rows() != t.value.rows() || it->second.cols() != t.value.cols())
        throw DataError("load_checkpoint: shape mismatch for " + t.name);
      t.value = it->second;
    });
  };
  assign(ck.params, "");
  assign(ck.ema, "ema/");
  return ck;
}

}  // namespace trackforge
