#include "nwb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "nwb/error.hpp"
#include "nwb/io.hpp"
#include "nwb/parallel.hpp"
#include "nwb/rng.hpp"
#include "nwb/version.hpp"

namespace nwb::dataset {

using homogeneity::CVProfile;
using homogeneity::kNumResolutions;
using json = nlohmann::json;

namespace {

constexpr std::string_view kHeader =
    "setting_id,replicate,sigma1_mm,sigma2_mm,A,v,n_per_m,seed,cv_0p5,cv_1,cv_2,cv_5,cv_10,cv_20,cv_50,split";
constexpr std::size_t kColumns = 16;
constexpr std::string_view kErrorToken = "error";

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::vector<ProcessParams> latin_hypercube(const ParamRanges& ranges, std::size_t k, std::uint64_t seed) {
  ranges.validate();
  if (k == 0) throw ValidationError("latin hypercube needs at least one point", {"count"});
  rng::Engine eng(seed);
  std::vector<std::array<double, kNumFeatures>> pts(k);
  std::vector<std::size_t> perm(k);
  for (std::size_t d = 0; d < kNumFeatures; ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    eng.shuffle(std::span<std::size_t>(perm));
    const double lo = ranges[d].lo, w = ranges[d].width();
    for (std::size_t i = 0; i < k; ++i) {
      const double a = lo + w * static_cast<double>(perm[i]) / static_cast<double>(k);
      const double b = perm[i] + 1 == k ? ranges[d].hi : lo + w * static_cast<double>(perm[i] + 1) / static_cast<double>(k);
      double x = a + (b - a) * eng.uniform();
      if (x >= b && b > a) x = std::nextafter(b, a);
      pts[i][d] = x;
    }
  }
  std::vector<ProcessParams> out;
  out.reserve(k);
  for (const auto& f : pts) out.push_back(ProcessParams::unchecked(f[0], f[1], f[2], f[3], f[4]));
  return out;
}

std::vector<ProcessParams> expert_grid(const std::array<std::vector<double>, kNumFeatures>& values) {
  std::vector<std::string> empty;
  for (std::size_t d = 0; d < kNumFeatures; ++d)
    if (values[d].empty()) empty.emplace_back(kFeatureNames[d]);
  if (!empty.empty()) throw ValidationError("every parameter needs at least one level", empty);
  std::vector<ProcessParams> out;
  std::array<std::size_t, kNumFeatures> idx{};
  for (;;) {
    std::array<double, kNumFeatures> f{};
    for (std::size_t d = 0; d < kNumFeatures; ++d) f[d] = values[d][idx[d]];
    out.push_back(ProcessParams::unchecked(f[0], f[1], f[2], f[3], f[4]));
    std::size_t d = kNumFeatures;
    while (d > 0) {
      --d;
      if (++idx[d] < values[d].size()) break;
      idx[d] = 0;
      if (d == 0) return out;
    }
  }
}

std::vector<ProcessParams> expert_grid(const ParamRanges& ranges, const std::array<std::size_t, kNumFeatures>& levels) {
  ranges.validate();
  std::array<std::vector<double>, kNumFeatures> values;
  for (std::size_t d = 0; d < kNumFeatures; ++d) {
    const std::size_t n = levels[d];
    if (n == 1) values[d].push_back(0.5 * (ranges[d].lo + ranges[d].hi));
    for (std::size_t i = 0; n > 1 && i < n; ++i)
      values[d].push_back(i + 1 == n ? ranges[d].hi
                                     : ranges[d].lo + ranges[d].width() * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return expert_grid(values);
}

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: break;
  }
  return "none";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "none") return Split::none;
  throw FormatError("unknown split label '" + std::string(s) + "'");
}

std::size_t CampaignDataset::setting_count() const {
  std::set<std::size_t> ids;
  for (const auto& r : rows) ids.insert(r.setting_id);
  return ids.size();
}

Xy select(const CampaignDataset& ds, std::optional<Split> split) {
  std::vector<const Row*> picked;
  for (const auto& r : ds.rows)
    if (r.ok() && (!split || r.split == *split)) picked.push_back(&r);
  Xy out;
  out.x.resize(static_cast<Eigen::Index>(picked.size()), kNumFeatures);
  out.y.resize(static_cast<Eigen::Index>(picked.size()), kNumResolutions);
  for (std::size_t i = 0; i < picked.size(); ++i) {
    const auto f = picked[i]->params.features();
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t d = 0; d < kNumFeatures; ++d) out.x(ii, static_cast<Eigen::Index>(d)) = f[d];
    for (std::size_t k = 0; k < kNumResolutions; ++k) out.y(ii, static_cast<Eigen::Index>(k)) = picked[i]->profile.values[k];
    out.groups.push_back(picked[i]->setting_id);
  }
  return out;
}

std::uint64_t row_seed(std::uint64_t campaign_seed, std::size_t setting_id, std::size_t replicate) noexcept {
  return rng::derive(campaign_seed, {setting_id, replicate});
}

std::string to_csv(const CampaignDataset& ds) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& r : ds.rows) {
    out += std::to_string(r.setting_id);
    out += ',';
    out += std::to_string(r.replicate);
    for (double f : r.params.features()) {
      out += ',';
      out += io::format_double(f);
    }
    out += ',';
    out += std::to_string(r.seed);
    for (double c : r.profile.values) {
      out += ',';
      out += r.ok() ? io::format_double(c) : std::string(kErrorToken);
    }
    out += ',';
    out += to_string(r.split);
    out += '\n';
  }
  return out;
}

CampaignDataset parse_csv(std::string_view text) {
  CampaignDataset ds;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line != kHeader) throw FormatError("unexpected campaign CSV header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != kColumns)
      throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(kColumns) + " fields");
    try {
      Row r;
      r.setting_id = io::parse_u64(f[0]);
      r.replicate = io::parse_u64(f[1]);
      std::array<double, kNumFeatures> feat{};
      for (std::size_t d = 0; d < kNumFeatures; ++d) feat[d] = io::parse_double(f[2 + d]);
      r.params = ProcessParams::unchecked(feat[0], feat[1], feat[2], feat[3], feat[4]);
      r.seed = io::parse_u64(f[7]);
      if (f[8] == kErrorToken) {
        r.error = kErrorToken;
      } else {
        for (std::size_t k = 0; k < kNumResolutions; ++k) r.profile.values[k] = io::parse_double(f[8 + k]);
      }
      r.split = parse_split(f[15]);
      ds.rows.push_back(std::move(r));
    } catch (const ValidationError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (line_no == 0) throw FormatError("empty campaign CSV");
  std::sort(ds.rows.begin(), ds.rows.end(), [](const Row& a, const Row& b) {
    return std::pair(a.setting_id, a.replicate) < std::pair(b.setting_id, b.replicate);
  });
  return ds;
}

std::filesystem::path manifest_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".manifest.json");
  return p;
}

namespace {

json manifest_json(const CampaignDataset& ds, const CampaignOptions& o, std::size_t settings) {
  json failures = json::array();
  for (const auto& r : ds.rows)
    if (!r.ok()) failures.push_back({{"setting_id", r.setting_id}, {"replicate", r.replicate}, {"message", r.error}});
  return {{"format", "nwb-campaign"},
          {"version", 1},
          {"code_version", std::string(kVersion)},
          {"design", o.design},
          {"seed", o.seed},
          {"window", {{"machine_mm", o.window.machine_extent_mm}, {"cross_mm", o.window.cross_extent_mm}}},
          {"replicates", o.replicates},
          {"settings", settings},
          {"config",
           {{"reference_length_mm", o.config.reference_length_mm},
            {"fiber_mass_per_length", o.config.fiber_mass_per_length},
            {"margin_sigmas", o.config.margin_sigmas}}},
          {"rows", ds.rows.size()},
          {"failures", failures}};
}

// Rows from an earlier run of the same campaign, checked for compatibility.
std::map<std::pair<std::size_t, std::size_t>, Row> resume_rows(const std::filesystem::path& csv,
                                                               const CampaignOptions& o,
                                                               const std::vector<ProcessParams>& points) {
  std::map<std::pair<std::size_t, std::size_t>, Row> done;
  if (!std::filesystem::exists(csv)) return done;
  const auto mpath = manifest_path(csv);
  if (std::filesystem::exists(mpath)) {
    json m;
    try {
      m = json::parse(io::read_file(mpath));
    } catch (const json::exception& e) {
      throw FormatError("unreadable campaign manifest: " + std::string(e.what()));
    }
    const bool same = m.value("seed", std::uint64_t{0}) == o.seed &&
                      m["window"].value("machine_mm", 0.0) == o.window.machine_extent_mm &&
                      m["window"].value("cross_mm", 0.0) == o.window.cross_extent_mm &&
                      m["config"].value("reference_length_mm", 0.0) == o.config.reference_length_mm &&
                      m["config"].value("fiber_mass_per_length", 0.0) == o.config.fiber_mass_per_length &&
                      m["config"].value("margin_sigmas", 0.0) == o.config.margin_sigmas;
    if (!same) throw ValidationError("existing campaign output was produced with different settings", {"output"});
  }
  auto ds = read_csv(csv);
  for (auto& r : ds.rows) {
    if (r.setting_id >= points.size() || r.replicate >= o.replicates) continue;
    if (r.params.features() != points[r.setting_id].features() || r.seed != row_seed(o.seed, r.setting_id, r.replicate))
      throw ValidationError("existing campaign output does not match the requested design", {"output"});
    r.split = Split::none;
    done.emplace(std::pair(r.setting_id, r.replicate), std::move(r));
  }
  return done;
}

}  // namespace

void write_csv(const CampaignDataset& ds, const std::filesystem::path& path) { io::write_file_atomic(path, to_csv(ds)); }

CampaignDataset read_csv(const std::filesystem::path& path) {
  auto ds = parse_csv(io::read_file(path));
  // Failure messages live in the manifest.
  const auto mpath = manifest_path(path);
  if (std::filesystem::exists(mpath)) {
    try {
      const auto m = json::parse(io::read_file(mpath));
      std::map<std::pair<std::size_t, std::size_t>, std::string> messages;
      for (const auto& f : m.value("failures", json::array()))
        messages[{f.at("setting_id").get<std::size_t>(), f.at("replicate").get<std::size_t>()}] = f.at("message").get<std::string>();
      for (auto& r : ds.rows)
        if (!r.ok())
          if (auto it = messages.find({r.setting_id, r.replicate}); it != messages.end()) r.error = it->second;
    } catch (const json::exception& e) {
      throw FormatError("unreadable campaign manifest: " + std::string(e.what()));
    }
  }
  return ds;
}

Simulator laydown_simulator(const LaydownConfig& config) {
  return [config](const ProcessParams& p, const SampleWindow& w, std::uint64_t seed) {
    return homogeneity::simulate_and_measure(p, w, seed, config).profile;
  };
}

CampaignDataset run_campaign(const std::vector<ProcessParams>& points, const CampaignOptions& o,
                             const Simulator& simulator) {
  if (points.empty()) throw ValidationError("campaign needs at least one setting", {"points"});
  if (o.replicates == 0) throw ValidationError("campaign needs at least one replicate", {"replicates"});
  o.window.validate();
  o.config.validate();
  for (const auto& p : points)
    if (p.step_size_m && *p.step_size_m != kDefaultStepSizeM)
      throw ValidationError("campaign rows do not record a custom step size", {"step_size_m"});
  const Simulator sim = simulator ? simulator : laydown_simulator(o.config);

  std::map<std::pair<std::size_t, std::size_t>, Row> done;
  if (o.output) done = resume_rows(*o.output, o, points);

  std::vector<std::pair<std::size_t, std::size_t>> pending;
  for (std::size_t s = 0; s < points.size(); ++s)
    for (std::size_t r = 0; r < o.replicates; ++r)
      if (!done.count({s, r})) pending.emplace_back(s, r);

  const std::size_t total = points.size() * o.replicates;
  std::mutex mutex;
  std::size_t since_checkpoint = 0;
  auto snapshot = [&] {
    CampaignDataset ds;
    for (const auto& [key, row] : done) ds.rows.push_back(row);
    return ds;
  };
  auto checkpoint = [&] {
    const auto ds = snapshot();
    write_csv(ds, *o.output);
    io::write_file_atomic(manifest_path(*o.output), manifest_json(ds, o, points.size()).dump(2) + "\n");
  };

  parallel_for(pending.size(), o.workers, [&](std::size_t i, unsigned) {
    const auto [s, r] = pending[i];
    Row row;
    row.setting_id = s;
    row.replicate = r;
    row.params = points[s];
    row.params.step_size_m.reset();
    row.seed = row_seed(o.seed, s, r);
    try {
      row.profile = sim(row.params, o.window, row.seed);
    } catch (const std::exception& e) {
      row.error = e.what();
      if (row.error.empty()) row.error = kErrorToken;
    }
    std::lock_guard lock(mutex);
    done.emplace(std::pair(s, r), std::move(row));
    if (o.progress) o.progress(done.size(), total);
    if (o.output && ++since_checkpoint >= std::max<std::size_t>(o.checkpoint_every, 1)) {
      checkpoint();
      since_checkpoint = 0;
    }
  });
  if (o.output) checkpoint();
  return snapshot();
}

void grouped_split(CampaignDataset& ds, std::uint64_t seed, SplitFractions fractions) {
  if (!(fractions.test >= 0.0 && fractions.test < 1.0 && fractions.val >= 0.0 && fractions.val < 1.0))
    throw ValidationError("split fractions must lie in [0, 1)", {"fractions"});
  std::set<std::size_t> ids;
  for (const auto& r : ds.rows)
    if (r.ok()) ids.insert(r.setting_id);
  if (ids.size() < 5)
    throw ValidationError("grouped split needs at least 5 settings, got " + std::to_string(ids.size()), {"settings"});
  std::vector<std::size_t> order(ids.begin(), ids.end());
  rng::Engine eng(seed);
  eng.shuffle(std::span<std::size_t>(order));
  const auto g = static_cast<double>(order.size());
  const auto n_test = static_cast<std::size_t>(std::lround(fractions.test * g));
  const auto n_val = static_cast<std::size_t>(std::lround(fractions.val * (g - static_cast<double>(n_test))));
  std::map<std::size_t, Split> label;
  for (std::size_t i = 0; i < order.size(); ++i)
    label[order[i]] = i < n_test ? Split::test : i < n_test + n_val ? Split::val : Split::train;
  for (auto& r : ds.rows) r.split = r.ok() ? label.at(r.setting_id) : Split::none;
}

Standardizer::Standardizer(Vector mean, Vector sd) : mean_(std::move(mean)), sd_(std::move(sd)) {
  if (mean_.size() != sd_.size()) throw ValidationError("standardizer mean and sd sizes differ", {"sd"});
  for (Eigen::Index i = 0; i < sd_.size(); ++i)
    if (!(sd_[i] > 0.0) || !std::isfinite(sd_[i]) || !std::isfinite(mean_[i]))
      throw ValidationError("standardizer needs finite mean and positive sd", {"sd"});
}

Standardizer Standardizer::fit(const Matrix& x, const std::vector<std::string>& names) {
  if (x.rows() == 0) throw ValidationError("cannot fit a standardizer on zero rows", {"rows"});
  const Vector mean = x.colwise().mean().transpose();
  Vector sd(x.cols());
  std::vector<std::string> constant;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    sd[j] = std::sqrt((x.col(j).array() - mean[j]).square().mean());
    if (!(sd[j] > 0.0) || !std::isfinite(sd[j]))
      constant.push_back(static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)]
                                                                     : "column " + std::to_string(j));
  }
  if (!constant.empty()) {
    std::string msg = "constant feature cannot be standardized:";
    for (const auto& c : constant) msg += " " + c;
    throw ValidationError(msg, constant);
  }
  return Standardizer(mean, sd);
}

Matrix Standardizer::transform(const Matrix& x) const {
  if (x.cols() != mean_.size()) throw ValidationError("feature count does not match the standardizer", {"features"});
  return (x.rowwise() - mean_.transpose()).array().rowwise() / sd_.transpose().array();
}

Matrix Standardizer::inverse_transform(const Matrix& z) const {
  if (z.cols() != mean_.size()) throw ValidationError("feature count does not match the standardizer", {"features"});
  return (z.array().rowwise() * sd_.transpose().array()).rowwise() + mean_.transpose().array();
}

namespace {

CVProfile relative_sd(const std::vector<CVProfile>& runs) {
  CVProfile out;
  const auto n = static_cast<double>(runs.size());
  for (std::size_t k = 0; k < kNumResolutions; ++k) {
    double mean = 0.0;
    for (const auto& r : runs) mean += r.values[k];
    mean /= n;
    double var = 0.0;
    for (const auto& r : runs) var += (r.values[k] - mean) * (r.values[k] - mean);
    var /= n;
    if (var == 0.0) {
      out.values[k] = 0.0;
    } else {
      if (!(mean > 0.0)) throw DegenerateSampleError("CV values average to zero across runs");
      out.values[k] = std::sqrt(var) / mean;
    }
  }
  return out;
}

}  // namespace

UncertaintyReport uncertainty_report(const ProcessParams& params, const std::vector<SampleWindow>& windows,
                                     std::size_t runs, std::uint64_t seed, const Simulator& simulator,
                                     unsigned workers) {
  if (runs < 2) throw ValidationError("uncertainty needs at least two runs", {"runs"});
  if (windows.empty()) throw ValidationError("uncertainty needs at least one window", {"windows"});
  for (const auto& w : windows) w.validate();
  UncertaintyReport rep;
  rep.windows = windows;
  rep.runs.assign(windows.size(), std::vector<CVProfile>(runs));
  parallel_for(windows.size() * runs, workers, [&](std::size_t i, unsigned) {
    const std::size_t w = i / runs, r = i % runs;
    rep.runs[w][r] = simulator(params, windows[w], rng::derive(seed, {w, r}));
  });
  for (const auto& r : rep.runs) rep.cv_of_cv.push_back(relative_sd(r));
  return rep;
}

double profile_deviation(const CVProfile& reference, const CVProfile& other) {
  double s = 0.0;
  for (std::size_t k = 0; k < kNumResolutions; ++k) {
    const double d = std::fabs(reference.values[k] - other.values[k]);
    if (d == 0.0) continue;
    s += reference.values[k] > 0.0 ? d / reference.values[k] : std::numeric_limits<double>::infinity();
  }
  return s / static_cast<double>(kNumResolutions);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of an empty sample", {"values"});
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile level must lie in [0, 1]", {"quantile"});
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

StepSizeStudy step_size_study(const std::vector<ProcessParams>& points, const StepSizeOptions& o,
                              const Simulator& simulator) {
  if (points.empty()) throw ValidationError("step-size study needs at least one setting", {"points"});
  if (!(o.ds_low_m > 0.0 && o.ds_low_m <= o.ds_high_m))
    throw ValidationError("step sizes must satisfy 0 < ds_low <= ds_high", {"ds_low", "ds_high"});
  o.window.validate();
  const std::size_t n = points.size();
  std::vector<CVProfile> a(n), b(n), c(n);
  parallel_for(3 * n, o.workers, [&](std::size_t i, unsigned) {
    const std::size_t s = i / 3, which = i % 3;
    auto p = points[s];
    p.step_size_m = which == 2 ? o.ds_high_m : o.ds_low_m;
    const std::uint64_t seed = rng::derive(o.seed, {s, which == 1 ? 1u : 0u});
    (which == 0 ? a : which == 1 ? b : c)[s] = simulator(p, o.window, seed);
  });
  StepSizeStudy st;
  for (std::size_t s = 0; s < n; ++s) {
    st.noise_devs.push_back(profile_deviation(a[s], b[s]));
    st.ds_devs.push_back(profile_deviation(a[s], c[s]));
  }
  st.threshold = quantile(st.noise_devs, o.quantile);
  const auto above = std::count_if(st.ds_devs.begin(), st.ds_devs.end(), [&](double d) { return d > st.threshold; });
  st.exceedance = static_cast<double>(above) / static_cast<double>(n);
  return st;
}

AveragingStudy averaging_study(const std::vector<std::vector<CVProfile>>& runs, std::size_t group_size) {
  if (runs.empty()) throw ValidationError("averaging study needs at least one setting", {"runs"});
  if (group_size == 0) throw ValidationError("group size must be positive", {"group_size"});
  AveragingStudy st;
  std::array<double, kNumResolutions> single{}, means{};
  for (const auto& setting : runs) {
    const std::size_t groups = setting.size() / group_size;
    if (groups < 2) throw ValidationError("each setting needs at least two full groups of runs", {"runs"});
    const std::size_t n = groups * group_size;
    for (std::size_t k = 0; k < kNumResolutions; ++k) {
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) mu += setting[i].values[k];
      mu /= static_cast<double>(n);
      if (!(mu > 0.0)) throw DegenerateSampleError("setting with zero mean CV in averaging study");
      double v1 = 0.0, vg = 0.0;
      for (std::size_t i = 0; i < n; ++i) v1 += (setting[i].values[k] - mu) * (setting[i].values[k] - mu);
      for (std::size_t g = 0; g < groups; ++g) {
        double m = 0.0;
        for (std::size_t i = 0; i < group_size; ++i) m += setting[g * group_size + i].values[k];
        m /= static_cast<double>(group_size);
        vg += (m - mu) * (m - mu);
      }
      single[k] += v1 / static_cast<double>(n - 1) / (mu * mu);
      means[k] += vg / static_cast<double>(groups - 1) / (mu * mu);
    }
  }
  const auto s = static_cast<double>(runs.size());
  for (std::size_t k = 0; k < kNumResolutions; ++k) {
    st.single[k] = std::sqrt(single[k] / s);
    st.of_means[k] = std::sqrt(means[k] / s);
    st.ratio[k] = st.single[k] > 0.0 ? st.of_means[k] / (st.single[k] / std::sqrt(static_cast<double>(group_size))) : 1.0;
  }
  return st;
}

}  // namespace nwb::dataset
