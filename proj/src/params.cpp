#include "nwb/params.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "nwb/error.hpp"

namespace nwb {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

void throw_if(const std::vector<std::string>& bad, const char* what) {
  if (!bad.empty()) throw ValidationError(std::string(what) + ": " + join(bad), bad);
}

}  // namespace

void ParamRanges::validate() const {
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto& b = bounds[i];
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || b.lo > b.hi)
      bad.emplace_back(kFeatureNames[i]);
  }
  throw_if(bad, "empty or invalid parameter range");
}

ProcessParams ProcessParams::unchecked(double sigma1_mm, double sigma2_mm, double a, double v,
                                       double n_per_m, std::optional<double> step_size_m) {
  ProcessParams p{sigma1_mm, sigma2_mm, a, v, n_per_m, step_size_m};
  std::vector<std::string> bad;
  const auto f = p.features();
  for (std::size_t i = 0; i < kNumFeatures; ++i)
    if (!std::isfinite(f[i])) bad.emplace_back(kFeatureNames[i]);
  if (!(sigma1_mm >= 0.0)) bad.emplace_back("sigma1_mm");
  if (!(sigma2_mm >= 0.0)) bad.emplace_back("sigma2_mm");
  if (!(a >= 0.0)) bad.emplace_back("A");
  if (!(v > 0.0)) bad.emplace_back("v");
  if (!(n_per_m > 0.0)) bad.emplace_back("n_per_m");
  if (step_size_m && !(*step_size_m > 0.0 && std::isfinite(*step_size_m)))
    bad.emplace_back("step_size_m");
  throw_if(bad, "invalid process parameters");
  return p;
}

ProcessParams ProcessParams::checked(double sigma1_mm, double sigma2_mm, double a, double v,
                                     double n_per_m, std::optional<double> step_size_m) {
  ProcessParams p{sigma1_mm, sigma2_mm, a, v, n_per_m, step_size_m};
  throw_if(p.violations(), "process parameters out of range");
  return p;
}

ProcessParams ProcessParams::from_features(const std::array<double, kNumFeatures>& f,
                                           bool check_ranges) {
  return check_ranges ? checked(f[0], f[1], f[2], f[3], f[4])
                      : unchecked(f[0], f[1], f[2], f[3], f[4]);
}

std::vector<std::string> ProcessParams::violations(const ParamRanges& ranges) const {
  std::vector<std::string> bad;
  const auto f = features();
  for (std::size_t i = 0; i < kNumFeatures; ++i)
    if (!std::isfinite(f[i]) || !ranges[i].contains(f[i])) bad.emplace_back(kFeatureNames[i]);
  if (step_size_m && !(*step_size_m > 0.0 && std::isfinite(*step_size_m)))
    bad.emplace_back("step_size_m");
  return bad;
}

SampleWindow SampleWindow::make(double machine_mm, double cross_mm) {
  SampleWindow w{machine_mm, cross_mm};
  w.validate();
  return w;
}

SampleWindow SampleWindow::parse(std::string_view text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string_view::npos) throw ValidationError("window must look like 500x250", {"window"});
  const std::string m(text.substr(0, x));
  const std::string c(text.substr(x + 1));
  char* end = nullptr;
  const double mv = std::strtod(m.c_str(), &end);
  if (end == m.c_str() || *end != '\0') throw ValidationError("bad machine extent in window", {"window"});
  const double cv = std::strtod(c.c_str(), &end);
  if (end == c.c_str() || *end != '\0') throw ValidationError("bad cross extent in window", {"window"});
  return make(mv, cv);
}

void SampleWindow::validate() const {
  std::vector<std::string> bad;
  if (!(machine_extent_mm > 0.0) || !std::isfinite(machine_extent_mm)) bad.emplace_back("machine_extent_mm");
  if (!(cross_extent_mm > 0.0) || !std::isfinite(cross_extent_mm)) bad.emplace_back("cross_extent_mm");
  throw_if(bad, "invalid sample window");
}

std::string SampleWindow::to_string() const {
  std::ostringstream os;
  os << machine_extent_mm << "x" << cross_extent_mm;
  return os.str();
}

void LaydownConfig::validate() const {
  std::vector<std::string> bad;
  if (!(reference_length_mm > 0.0)) bad.emplace_back("reference_length_mm");
  if (!(fiber_mass_per_length > 0.0)) bad.emplace_back("fiber_mass_per_length");
  if (!(margin_sigmas >= 0.0)) bad.emplace_back("margin_sigmas");
  throw_if(bad, "invalid laydown config");
}

}  // namespace nwb
