#include "trackforge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace trackforge {

double clip_mean_displacement(const TrackSet& tracks) {
  double sum = 0;
  int count = 0;
  int last = tracks.t - 1;
  for (int i = 0; i < tracks.n; ++i) {
    if (!tracks.vis(i, 0) || !tracks.vis(i, last)) continue;
    sum += std::hypot(tracks.x(i, last) - tracks.x(i, 0), tracks.y(i, last) - tracks.y(i, 0));
    ++count;
  }
  return count ? sum / count : 0.0;
}

namespace {

Histogram log_histogram(const std::vector<double>& logs, int n_bins) {
  Histogram h;
  if (logs.empty()) return h;
  double lo = *std::min_element(logs.begin(), logs.end());
  double hi = *std::max_element(logs.begin(), logs.end());
  if (hi <= lo) hi = lo + 1e-9;
  double width = (hi - lo) / n_bins;
  h.bin_centers.resize(size_t(n_bins));
  h.counts.assign(size_t(n_bins), 0);
  for (int b = 0; b < n_bins; ++b) h.bin_centers[b] = lo + (b + 0.5) * width;
  for (double v : logs) {
    int b = std::min(n_bins - 1, int((v - lo) / width));
    ++h.counts[size_t(std::max(0, b))];
  }
  return h;
}

double normal_cdf(double x, double mu, double sigma) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

// R^2 of observed log-counts vs model log-counts over non-empty bins.
double r2_logfreq(const std::vector<double>& obs_log, const std::vector<double>& model_log) {
  double mean = 0;
  for (double v : obs_log) mean += v;
  mean /= double(obs_log.size());
  double ss_tot = 0, ss_res = 0;
  for (size_t i = 0; i < obs_log.size(); ++i) {
    ss_tot += (obs_log[i] - mean) * (obs_log[i] - mean);
    ss_res += (obs_log[i] - model_log[i]) * (obs_log[i] - model_log[i]);
  }
  return ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
}

}  // namespace

MotionStats motion_statistics(const std::vector<double>& displacements, int n_bins) {
  if (displacements.size() < 100)
    throw DataError("motion_statistics: need at least 100 clips");
  MotionStats st;
  st.n_clips = int(displacements.size());
  st.displacements = displacements;

  std::vector<double> logs;
  for (double d : displacements) {
    if (d <= 0.0) {
      ++st.n_zero;
      continue;
    }
    logs.push_back(std::log(d));
  }
  if (logs.size() < 2) {
    st.degenerate = true;
    return st;
  }

  double mu = 0;
  for (double v : logs) mu += v;
  mu /= double(logs.size());
  double var = 0;
  for (double v : logs) var += (v - mu) * (v - mu);
  var /= double(logs.size() - 1);
  st.lognormal_mu = mu;
  st.lognormal_sigma = std::sqrt(var);
  if (st.lognormal_sigma < 1e-12) {
    st.degenerate = true;
    return st;
  }

  st.magnitude = log_histogram(logs, n_bins);
  // Components, for the x/y-displacement histograms.
  // (Filled by the caller when component displacements are available.)

  // Log-frequency comparison over non-empty bins.
  double bin_width = st.magnitude.bin_centers.size() > 1
                         ? st.magnitude.bin_centers[1] - st.magnitude.bin_centers[0]
                         : 1.0;
  std::vector<double> obs_log, centers, ln_model;
  for (size_t b = 0; b < st.magnitude.counts.size(); ++b) {
    if (st.magnitude.counts[b] <= 0) continue;
    double c = st.magnitude.bin_centers[b];
    obs_log.push_back(std::log(double(st.magnitude.counts[b])));
    centers.push_back(c);
    double p = normal_cdf(c + bin_width / 2, mu, st.lognormal_sigma) -
               normal_cdf(c - bin_width / 2, mu, st.lognormal_sigma);
    ln_model.push_back(std::log(std::max(1e-300, double(logs.size()) * p)));
  }
  st.r2_lognormal = r2_logfreq(obs_log, ln_model);

  // Power law p(x) ~ x^-a: linear in (log x, log freq).
  // centers are already log displacement, so fit obs_log = b + (-a) * center.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double n = double(centers.size());
  for (size_t i = 0; i < centers.size(); ++i) {
    sx += centers[i];
    sy += obs_log[i];
    sxx += centers[i] * centers[i];
    sxy += centers[i] * obs_log[i];
  }
  double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-12) {
    st.degenerate = true;
    return st;
  }
  double slope = (n * sxy - sx * sy) / denom;
  double intercept = (sy - slope * sx) / n;
  st.powerlaw_exponent = -slope;
  st.powerlaw_intercept = intercept;
  std::vector<double> pl_model(centers.size());
  for (size_t i = 0; i < centers.size(); ++i) pl_model[i] = intercept + slope * centers[i];
  st.r2_powerlaw = r2_logfreq(obs_log, pl_model);
  return st;
}

void write_stats_csv(const std::filesystem::path& path, const MotionStats& stats) {
  std::ofstream out(path);
  out << "bin_center,count\n";
  for (size_t b = 0; b < stats.magnitude.bin_centers.size(); ++b)
    out << stats.magnitude.bin_centers[b] << "," << stats.magnitude.counts[b] << "\n";
}

void write_stats_svg(const std::filesystem::path& path, const MotionStats& stats) {
  const int w = 640, h = 420, ml = 60, mb = 50, mt = 20, mr = 20;
  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  const auto& hist = stats.magnitude;
  if (hist.bin_centers.empty()) {
    out << "</svg>\n";
    return;
  }
  double xmin = hist.bin_centers.front(), xmax = hist.bin_centers.back();
  long cmax = *std::max_element(hist.counts.begin(), hist.counts.end());
  double ymax = std::log(double(std::max(1l, cmax))) + 0.5;
  auto sx = [&](double v) { return ml + (v - xmin) / (xmax - xmin + 1e-12) * (w - ml - mr); };
  auto sy = [&](double v) { return h - mb - v / ymax * (h - mt - mb); };

  double bw = hist.bin_centers.size() > 1 ? hist.bin_centers[1] - hist.bin_centers[0] : 1.0;
  double bwpx = bw / (xmax - xmin + 1e-12) * (w - ml - mr);
  for (size_t b = 0; b < hist.counts.size(); ++b) {
    if (hist.counts[b] <= 0) continue;
    double y = sy(std::log(double(hist.counts[b])));
    out << "<rect x='" << sx(hist.bin_centers[b]) - bwpx / 2 << "' y='" << y << "' width='"
        << bwpx * 0.9 << "' height='" << (h - mb - y) << "' fill='#9ecae1'/>\n";
  }
  long n = 0;
  for (long c : hist.counts) n += c;
  // Fitted curves in log-frequency space.
  auto curve = [&](auto model, const char* color) {
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (int k = 0; k <= 100; ++k) {
      double x = xmin + (xmax - xmin) * k / 100.0;
      double lf = model(x);
      if (lf < -1) continue;
      out << sx(x) << "," << sy(std::max(0.0, lf)) << " ";
    }
    out << "'/>\n";
  };
  double mu = stats.lognormal_mu, sg = std::max(1e-9, stats.lognormal_sigma);
  curve(
      [&](double x) {
        double p = std::exp(-(x - mu) * (x - mu) / (2 * sg * sg)) / (sg * std::sqrt(2 * M_PI));
        return std::log(std::max(1e-12, double(n) * p * bw));
      },
      "#6a51a3");
  curve([&](double x) { return stats.powerlaw_intercept - stats.powerlaw_exponent * x; },
        "#e6550d");
  out << "<text x='" << ml << "' y='" << h - 10
      << "' font-size='13'>log displacement (log-normal: purple, power law: orange)</text>\n";
  out << "</svg>\n";
}

}  // namespace trackforge
