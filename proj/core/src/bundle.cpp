#include "trackforge/bundle.hpp"

#include <fstream>

#include "json.hpp"

namespace trackforge {

namespace fs = std::filesystem;
using nlohmann::json;

void write_f32(const fs::path& path, const std::vector<double>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  std::vector<float> buf(data.begin(), data.end());
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
}

std::vector<double> read_f32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open: " + path.string());
  auto bytes = size_t(in.tellg());
  if (bytes % sizeof(float) != 0) throw DataError("truncated f32 file: " + path.string());
  in.seekg(0);
  std::vector<float> buf(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(bytes));
  return std::vector<double>(buf.begin(), buf.end());
}

void write_u8(const fs::path& path, const std::vector<uint8_t>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
}

std::vector<uint8_t> read_u8(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open: " + path.string());
  auto bytes = size_t(in.tellg());
  in.seekg(0);
  std::vector<uint8_t> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(bytes));
  return buf;
}

void write_bundle(const fs::path& dir, const Bundle& bundle) {
  fs::create_directories(dir);
  json meta = {
      {"n", bundle.tracks.n},
      {"t", bundle.tracks.t},
      {"t_cond", bundle.tracks.t_cond},
      {"fps", bundle.tracks.fps},
      {"scales", {{"v", bundle.scale_v}, {"o", bundle.scale_o}}},
      {"provenance", bundle.provenance},
      {"space", bundle.space},
      {"feature_dim", bundle.feature_dim},
  };
  std::ofstream mf(dir / "meta.json");
  mf << meta.dump(2) << "\n";
  write_f32(dir / "positions.f32", bundle.tracks.positions);
  write_u8(dir / "visibility.u8", bundle.tracks.visibility);
  if (bundle.feature_dim > 0) {
    std::ofstream out(dir / "features.f32", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bundle.features.data()),
              std::streamsize(bundle.features.size() * sizeof(float)));
  }
}

Bundle read_bundle(const fs::path& dir) {
  std::ifstream mf(dir / "meta.json");
  if (!mf) throw DataError("missing meta.json in " + dir.string());
  json meta = json::parse(mf);
  Bundle b;
  b.tracks.n = meta.at("n").get<int>();
  b.tracks.t = meta.at("t").get<int>();
  b.tracks.t_cond = meta.at("t_cond").get<int>();
  b.tracks.fps = meta.at("fps").get<double>();
  b.scale_v = meta.at("scales").at("v").get<double>();
  b.scale_o = meta.at("scales").at("o").get<double>();
  b.provenance = meta.value("provenance", "");
  b.space = meta.value("space", "normalized");
  b.feature_dim = meta.value("feature_dim", 0);
  b.tracks.positions = read_f32(dir / "positions.f32");
  b.tracks.visibility = read_u8(dir / "visibility.u8");
  if (b.tracks.positions.size() != size_t(b.tracks.n) * b.tracks.t * 2 ||
      b.tracks.visibility.size() != size_t(b.tracks.n) * b.tracks.t)
    throw DataError("bundle shape mismatch in " + dir.string());
  if (b.feature_dim > 0) {
    std::ifstream in(dir / "features.f32", std::ios::binary | std::ios::ate);
    if (!in) throw DataError("missing features.f32 in " + dir.string());
    auto bytes = size_t(in.tellg());
    in.seekg(0);
    b.features.resize(bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(b.features.data()), std::streamsize(bytes));
    if (b.features.size() != size_t(b.tracks.n) * b.feature_dim)
      throw DataError("feature shape mismatch in " + dir.string());
  }
  return b;
}

}  // namespace trackforge
