#include "nwb/explorer/search.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nwb/dataset.hpp"
#include "nwb/error.hpp"
#include "nwb/rng.hpp"
#include "nwb/surrogates/surrogate.hpp"

namespace nwb::explorer {

void Objective::validate() const {
  double total = 0.0;
  for (auto w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("objective weights must be finite and >= 0", {"weights"});
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("objective weights must not all be zero", {"weights"});
}

double Objective::operator()(const CVProfile& p) const {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < kNumResolutions; ++k) {
    num += weights[k] * p.values[k];
    den += weights[k];
  }
  return num / den;
}

Predictor predictor_for(const surrogates::TrainedSurrogate& model) {
  return [&model](const Matrix& x) { return model.predict(x); };
}

std::vector<Setting> evaluate_settings(const Predictor& predictor, const std::vector<ProcessParams>& params,
                                       const Objective& objective) {
  std::vector<Setting> out;
  if (params.empty()) return out;
  Matrix x(static_cast<Eigen::Index>(params.size()), static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto f = params[i].features();
    for (std::size_t j = 0; j < kNumFeatures; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
  }
  const Matrix y = predictor(x);
  if (y.rows() != x.rows() || y.cols() != static_cast<Eigen::Index>(kNumResolutions))
    throw StateError("predictor returned a malformed batch");
  out.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    out[i].params = params[i];
    for (std::size_t k = 0; k < kNumResolutions; ++k)
      out[i].predicted.values[k] = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    out[i].objective = objective(out[i].predicted);
  }
  return out;
}

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::grid: return "grid";
    case Strategy::random: return "random";
    case Strategy::local: return "local";
  }
  return "random";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "grid") return Strategy::grid;
  if (s == "random") return Strategy::random;
  if (s == "local") return Strategy::local;
  throw ValidationError("unknown strategy '" + std::string(s) + "' (grid, random, local)", {"strategy"});
}

namespace {

ProcessParams from_unit(const std::array<double, kNumFeatures>& u, const ParamRanges& r) {
  std::array<double, kNumFeatures> f{};
  for (std::size_t i = 0; i < kNumFeatures; ++i) f[i] = u[i] >= 1.0 ? r[i].hi : r[i].lo + u[i] * r[i].width();
  return ProcessParams::from_features(f, false);
}

std::array<double, kNumFeatures> to_unit(const ProcessParams& p, const ParamRanges& r) {
  std::array<double, kNumFeatures> u{};
  const auto f = p.features();
  for (std::size_t i = 0; i < kNumFeatures; ++i) u[i] = r[i].width() > 0.0 ? (f[i] - r[i].lo) / r[i].width() : 0.0;
  return u;
}

bool setting_less(const Setting& a, const Setting& b) {
  if (a.objective != b.objective) return a.objective < b.objective;
  return a.params.features() < b.params.features();
}

void sort_settings(std::vector<Setting>& s) { std::sort(s.begin(), s.end(), setting_less); }

}  // namespace

ExploreResult explore(const Predictor& predictor, const ExploreRequest& req) {
  if (req.budget == 0) throw ValidationError("exploration budget must be >= 1", {"budget"});
  req.objective.validate();
  req.ranges.validate();
  ExploreResult out;
  switch (req.strategy) {
    case Strategy::grid: {
      std::size_t total = 1;
      for (auto l : req.levels) {
        if (l == 0) throw ValidationError("grid levels must be >= 1", {"levels"});
        total *= l;
      }
      if (total > req.budget)
        throw ValidationError("grid of " + std::to_string(total) + " points exceeds the budget of " +
                                  std::to_string(req.budget),
                              {"levels"});
      out.settings = evaluate_settings(predictor, dataset::expert_grid(req.ranges, req.levels), req.objective);
      break;
    }
    case Strategy::random: {
      rng::Engine eng(rng::derive(req.seed, {0xE8F10}));
      std::vector<ProcessParams> pts(req.budget);
      for (auto& p : pts) {
        std::array<double, kNumFeatures> u{};
        for (auto& v : u) v = eng.uniform();
        p = from_unit(u, req.ranges);
      }
      out.settings = evaluate_settings(predictor, pts, req.objective);
      break;
    }
    case Strategy::local: {
      if (!req.start) throw ValidationError("local search needs a start setting", {"start"});
      if (!(req.initial_step > 0.0) || !(req.step_tolerance > 0.0))
        throw ValidationError("local search steps must be positive", {"step_tolerance"});
      std::array<double, kNumFeatures> u = to_unit(*req.start, req.ranges);
      for (auto& v : u) v = std::clamp(v, 0.0, 1.0);
      auto eval = [&](const std::vector<std::array<double, kNumFeatures>>& us) {
        std::vector<ProcessParams> ps;
        for (const auto& x : us) ps.push_back(from_unit(x, req.ranges));
        auto s = evaluate_settings(predictor, ps, req.objective);
        out.settings.insert(out.settings.end(), s.begin(), s.end());
        return s;
      };
      double best = eval({u}).front().objective;
      double step = req.initial_step;
      while (out.settings.size() < req.budget) {
        if (step < req.step_tolerance) {
          out.converged = true;
          break;
        }
        bool improved = false;
        for (std::size_t d = 0; d < kNumFeatures && out.settings.size() < req.budget; ++d) {
          std::vector<std::array<double, kNumFeatures>> probes;
          for (double sgn : {-1.0, 1.0}) {
            auto p = u;
            p[d] = std::clamp(p[d] + sgn * step, 0.0, 1.0);
            if (p[d] != u[d]) probes.push_back(p);
          }
          if (probes.size() > req.budget - out.settings.size()) probes.resize(req.budget - out.settings.size());
          if (probes.empty()) continue;
          const auto s = eval(probes);
          for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i].objective < best) {
              best = s[i].objective;
              u = probes[i];
              improved = true;
            }
        }
        if (!improved) step *= 0.5;
      }
      if (!out.converged && step < req.step_tolerance) out.converged = true;
      break;
    }
  }
  out.evaluations = out.settings.size();
  sort_settings(out.settings);
  return out;
}

SensitivitySweep sensitivity(const Predictor& predictor, const ProcessParams& params, std::size_t parameter,
                             std::size_t samples, const Objective& objective, const ParamRanges& ranges) {
  if (parameter >= kNumFeatures)
    throw ValidationError("parameter index must be below " + std::to_string(kNumFeatures), {"parameter"});
  if (samples < 2) throw ValidationError("a sweep needs at least 2 samples", {"samples"});
  objective.validate();
  const Interval iv = ranges[parameter];
  SensitivitySweep out;
  out.parameter = parameter;
  std::vector<ProcessParams> pts;
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(samples - 1);
    const double v = i + 1 == samples ? iv.hi : iv.lo + t * iv.width();
    auto f = params.features();
    f[parameter] = v;
    out.values.push_back(v);
    pts.push_back(ProcessParams::from_features(f, false));
  }
  for (const auto& s : evaluate_settings(predictor, pts, objective)) {
    out.objective.push_back(s.objective);
    out.profiles.push_back(s.predicted);
  }
  return out;
}

std::size_t parse_parameter(std::string_view s) {
  for (std::size_t i = 0; i < kNumFeatures; ++i)
    if (kFeatureNames[i] == s) return i;
  if (s.size() == 1 && s[0] >= '0' && s[0] < static_cast<char>('0' + kNumFeatures))
    return static_cast<std::size_t>(s[0] - '0');
  throw ValidationError("unknown parameter '" + std::string(s) + "'", {"parameter"});
}

Shortlist shortlist(std::vector<Setting> settings, std::size_t n) {
  if (n == 0) throw ValidationError("shortlist size must be >= 1", {"n"});
  sort_settings(settings);
  Shortlist out;
  for (auto& s : settings) {
    if (out.settings.size() == n) break;
    const bool dup = std::any_of(out.settings.begin(), out.settings.end(),
                                 [&](const Setting& o) { return o.params.features() == s.params.features(); });
    if (!dup) out.settings.push_back(std::move(s));
  }
  out.short_of_request = out.settings.size() < n;
  return out;
}

}  // namespace nwb::explorer
