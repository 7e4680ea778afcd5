#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "trackforge/trackset.hpp"

namespace trackforge {

// On-disk track bundle: a directory holding meta.json, positions.f32
// (little-endian IEEE-754, row-major [N,T,2]), visibility.u8 ([N,T]) and an
// optional features.f32 ([N,C]). Positions may be pixel- or bbox-normalized
// space depending on the pipeline stage; meta.json records which.
struct Bundle {
  TrackSet tracks;
  std::vector<float> features;  // [n][feature_dim], empty when absent
  int feature_dim = 0;
  double scale_v = 12.0;
  double scale_o = 0.1;
  std::string provenance;
  std::string space = "normalized";  // "pixel" or "normalized"
};

void write_bundle(const std::filesystem::path& dir, const Bundle& bundle);
Bundle read_bundle(const std::filesystem::path& dir);

// Raw little-endian array helpers shared by bundle and checkpoint IO.
void write_f32(const std::filesystem::path& path, const std::vector<double>& data);
std::vector<double> read_f32(const std::filesystem::path& path);
void write_u8(const std::filesystem::path& path, const std::vector<uint8_t>& data);
std::vector<uint8_t> read_u8(const std::filesystem::path& path);

}  // namespace trackforge
