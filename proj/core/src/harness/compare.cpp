#include "sliceroute/harness/compare.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "sliceroute/errors.hpp"

namespace sliceroute::harness {

std::string band_label(VolumeBand band) {
  switch (band) {
    case VolumeBand::Over10K: return "over 10K";
    case VolumeBand::Between1KAnd10K: return "1K-10K";
    case VolumeBand::Below1K: return "below 1K";
  }
  return "?";
}

VolumeBand volume_band(std::size_t count) {
  if (count > 10000) return VolumeBand::Over10K;
  if (count >= 1000) return VolumeBand::Between1KAnd10K;
  return VolumeBand::Below1K;
}

std::string format_points(double points) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", points);
  // -0.00 and +0.00 both print as 0.00
  if (std::string(buf) == "-0.00" || std::string(buf) == "+0.00") return "0.00";
  return buf;
}

namespace {

std::optional<double> diff_points(std::optional<double> a, std::optional<double> b) {
  if (!a || !b) return std::nullopt;
  return (*a - *b) * 100.0;
}

std::string pct(std::optional<double> v) {
  if (!v) return "undef";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

std::string pts(std::optional<double> v) { return v ? format_points(*v) : "undef"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string pad(const std::string& s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

}  // namespace

Comparison compare(std::span<const EvalReport> reports, const std::string& baseline) {
  auto base_it = std::find_if(reports.begin(), reports.end(), [&](const EvalReport& r) { return r.run_id == baseline; });
  if (base_it == reports.end()) throw InputError("baseline run '" + baseline + "' is not among the reports");
  const EvalReport& base = *base_it;
  for (const auto& r : reports) {
    if (r.test_hash != base.test_hash || r.test_size != base.test_size) {
      throw InputError("comparison refused: run '" + r.run_id + "' was evaluated on a different test file (" +
                       r.test_hash + " vs " + base.test_hash + ")");
    }
    bool same_layout = r.slices.size() == base.slices.size();
    for (std::size_t i = 0; same_layout && i < r.slices.size(); ++i) {
      same_layout = r.slices[i].name == base.slices[i].name && r.slices[i].support == base.slices[i].support;
    }
    if (!same_layout) throw InputError("comparison refused: run '" + r.run_id + "' uses a different slice layout");
  }

  Comparison c;
  c.baseline = baseline;
  c.test_size = base.test_size;
  for (const auto& s : base.slices) {
    c.slice_names.push_back(s.name);
    c.test_support.push_back(s.support);
    c.volume.push_back(s.train_support.value_or(s.support));
  }
  for (const auto& r : reports) {
    ComparisonRow row;
    row.run_id = r.run_id;
    row.model_kind = r.model_kind;
    row.overall_ra = r.overall_ra();
    row.overall_delta = (r.overall_ra() - base.overall_ra()) * 100.0;
    row.tail_macro_ra = r.tail_macro_ra();
    row.tail_macro_delta = diff_points(r.tail_macro_ra(), base.tail_macro_ra());
    std::vector<double> band_sum(std::size(kVolumeBands), 0.0);
    std::vector<std::size_t> band_count(std::size(kVolumeBands), 0);
    for (std::size_t i = 0; i < r.slices.size(); ++i) {
      row.slice_ra.push_back(r.slices[i].ra());
      auto delta = diff_points(r.slices[i].ra(), base.slices[i].ra());
      row.slice_delta.push_back(delta);
      if (i == 0 || !delta) continue;
      if (*delta < kDegradationThreshold) ++row.degraded_tails;
      if (*delta > -kDegradationThreshold) ++row.improved_tails;
      auto band = static_cast<std::size_t>(volume_band(c.volume[i]));
      band_sum[band] += *delta;
      ++band_count[band];
    }
    for (std::size_t b = 0; b < band_sum.size(); ++b) {
      row.band_delta.push_back(band_count[b] ? std::optional<double>(band_sum[b] / static_cast<double>(band_count[b]))
                                             : std::nullopt);
    }
    c.rows.push_back(std::move(row));
  }
  return c;
}

std::string comparison_csv(const Comparison& c) {
  std::ostringstream os;
  os << "run,model_kind,slice,band,volume,test_support,ra_pct,delta_pts\n";
  for (const auto& row : c.rows) {
    const std::string prefix = csv_field(row.run_id) + "," + csv_field(row.model_kind) + ",";
    os << prefix << "all,,," << c.test_size << "," << pct(row.overall_ra) << "," << format_points(row.overall_delta) << "\n";
    os << prefix << "tail_macro,,,," << pct(row.tail_macro_ra) << "," << pts(row.tail_macro_delta) << "\n";
    for (std::size_t i = 0; i < c.slice_names.size(); ++i) {
      os << prefix << csv_field(c.slice_names[i]) << "," << (i == 0 ? "" : band_label(volume_band(c.volume[i]))) << ","
         << c.volume[i] << "," << c.test_support[i] << "," << pct(row.slice_ra[i]) << "," << pts(row.slice_delta[i])
         << "\n";
    }
  }
  return os.str();
}

std::string format_comparison(const Comparison& c) {
  std::ostringstream os;
  std::size_t run_w = 3;
  for (const auto& row : c.rows) run_w = std::max(run_w, row.run_id.size());
  os << "baseline: " << c.baseline << " (deltas in percentage points)\n";
  os << pad("run", run_w, true) << pad("kind", 6) << pad("overall", 9) << pad("d_all", 8) << pad("tail", 8)
     << pad("d_tail", 8);
  for (auto band : kVolumeBands) os << pad("d " + band_label(band), 12);
  os << pad("worse", 7) << pad("better", 8) << "\n";
  for (const auto& row : c.rows) {
    os << pad(row.run_id, run_w, true) << pad(row.model_kind, 6) << pad(pct(row.overall_ra), 9)
       << pad(format_points(row.overall_delta), 8) << pad(pct(row.tail_macro_ra), 8) << pad(pts(row.tail_macro_delta), 8);
    for (const auto& b : row.band_delta) os << pad(pts(b), 12);
    os << pad(std::to_string(row.degraded_tails), 7) << pad(std::to_string(row.improved_tails), 8) << "\n";
  }

  std::size_t name_w = 5;
  for (const auto& n : c.slice_names) name_w = std::max(name_w, n.size());
  os << "\n" << pad("slice", name_w, true) << pad("band", 10) << pad("volume", 8) << pad("test", 6);
  for (const auto& row : c.rows) os << pad(row.run_id, std::max<std::size_t>(row.run_id.size() + 2, 9));
  os << "\n";
  for (std::size_t i = 0; i < c.slice_names.size(); ++i) {
    os << pad(c.slice_names[i], name_w, true) << pad(i == 0 ? "-" : band_label(volume_band(c.volume[i])), 10)
       << pad(std::to_string(c.volume[i]), 8) << pad(std::to_string(c.test_support[i]), 6);
    for (const auto& row : c.rows) os << pad(pts(row.slice_delta[i]), std::max<std::size_t>(row.run_id.size() + 2, 9));
    os << "\n";
  }
  return os.str();
}

}  // namespace sliceroute::harness
