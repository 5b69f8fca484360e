#include "tbell/analysis.hpp"

#include "tbell/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tbell::analysis {

namespace {

bool is_sorted_by_time(const TagStream& s) {
  return std::is_sorted(s.begin(), s.end(),
                        [](const auto& l, const auto& r) { return l.timestamp < r.timestamp; });
}

double folded_phase(std::uint64_t ticks, const PulseClock& clock) {
  const double t = clock.seconds(ticks);
  const double period = clock.period();
  const double phase = t - std::floor(t / period) * period;
  return phase >= period ? 0.0 : phase;
}

}  // namespace

std::uint64_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

Histogram histogram(const TagStream& stream, const PulseClock& clock, double bin_width,
                    std::optional<std::uint8_t> channel) {
  if (!(bin_width >= clock.resolution * (1.0 - 1e-12))) {
    throw ConfigError("histogram.bin_width", "must not be finer than the tagger resolution");
  }
  Histogram h;
  h.bin_width = bin_width;
  h.counts.assign(static_cast<std::size_t>(std::ceil(clock.period() / bin_width - 1e-9)), 0);
  for (const auto& r : stream) {
    if (channel && r.channel != *channel) continue;
    const auto bin = static_cast<std::size_t>(folded_phase(r.timestamp, clock) / bin_width);
    ++h.counts[std::min(bin, h.counts.size() - 1)];
  }
  return h;
}

SlotCounts slot_counts(const TagStream& stream, const PulseClock& clock, double half_window,
                       std::optional<std::uint8_t> channel) {
  SlotCounts c;
  for (const auto& r : stream) {
    if (channel && r.channel != *channel) continue;
    const double d = clock.central_offset(r.timestamp);
    if (std::abs(d) <= half_window) {
      ++c.central;
    } else if (std::abs(d + clock.delta_t) <= half_window) {
      ++c.early;
    } else if (std::abs(d - clock.delta_t) <= half_window) {
      ++c.late;
    } else {
      ++c.outside;
    }
  }
  return c;
}

double find_central_offset(const Histogram& h, double window) {
  if (h.counts.empty()) throw AnalysisError("empty histogram");
  const auto n = h.counts.size();
  const auto half = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(window / h.bin_width / 2.0)));
  std::uint64_t best = 0;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t sum = 0;
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const auto j = static_cast<std::size_t>((static_cast<std::ptrdiff_t>(i + n) + k) % static_cast<std::ptrdiff_t>(n));
      sum += h.counts[j];
    }
    if (sum > best) {
      best = sum;
      best_i = i;
    }
  }
  return h.bin_center(best_i);
}

void CoincidencePolicy::validate(double delta_t, double jitter_sigma) const {
  if (!(window > 0.0)) throw ConfigError("policy.window", "must be positive");
  if (mode == CoincidenceMode::AllSlots) {
    if (window < 2.0 * delta_t + 4.0 * jitter_sigma) {
      throw ConfigError("policy.window", "AllSlots needs a window of at least 2 delta_t plus jitter allowance");
    }
  } else if (!(window < delta_t)) {
    throw ConfigError("policy.window", "slot-selective matching needs a window shorter than delta_t");
  }
}

std::vector<Coincidence> find_coincidences(const TagStream& alice, const TagStream& bob, const PulseClock& clock,
                                           const CoincidencePolicy& policy,
                                           const eventsim::SettingSchedule* schedule) {
  if (!is_sorted_by_time(alice) || !is_sorted_by_time(bob)) {
    throw AnalysisError("tag streams must be sorted by timestamp");
  }
  if (!(policy.window > 0.0)) throw ConfigError("policy.window", "must be positive");

  const TagStream* a = &alice;
  const TagStream* b = &bob;
  TagStream a_central, b_central;
  if (policy.mode == CoincidenceMode::CentralOnly) {
    auto central = [&](const eventsim::TagRecord& r) {
      return std::abs(clock.central_offset(r.timestamp)) <= policy.window / 2.0;
    };
    std::copy_if(alice.begin(), alice.end(), std::back_inserter(a_central), central);
    std::copy_if(bob.begin(), bob.end(), std::back_inserter(b_central), central);
    a = &a_central;
    b = &b_central;
  }

  // Largest tick difference still inside the window.
  const auto max_ticks = static_cast<std::uint64_t>(std::floor(policy.window / clock.resolution + 1e-9));

  std::vector<Coincidence> out;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a->size() && j < b->size()) {
    const std::uint64_t ta = (*a)[i].timestamp;
    const std::uint64_t tb = (*b)[j].timestamp;
    if (ta < tb && tb - ta > max_ticks) {
      ++i;
    } else if (tb < ta && ta - tb > max_ticks) {
      ++j;
    } else {
      Coincidence c;
      c.a = eventsim::outcome_of((*a)[i].channel);
      c.b = eventsim::outcome_of((*b)[j].channel);
      c.slot_a = clock.slot_of(ta);
      c.slot_b = clock.slot_of(tb);
      if (schedule != nullptr) {
        const std::int64_t pulse = clock.pulse_of(ta);
        c.setting = static_cast<std::uint32_t>(schedule->setting_of(pulse < 0 ? 0 : static_cast<std::uint64_t>(pulse)));
      }
      out.push_back(c);
      ++i;
      ++j;
    }
  }
  return out;
}

void CountMatrix::add(Outcome a, Outcome b) {
  if (a == Outcome::Plus) {
    ++(b == Outcome::Plus ? pp : pm);
  } else {
    ++(b == Outcome::Plus ? mp : mm);
  }
}

std::uint64_t CountMatrix::operator()(Outcome a, Outcome b) const {
  if (a == Outcome::Plus) return b == Outcome::Plus ? pp : pm;
  return b == Outcome::Plus ? mp : mm;
}

std::vector<CountMatrix> tally(const std::vector<Coincidence>& coincidences, std::size_t n_settings) {
  std::vector<CountMatrix> out(n_settings);
  for (const auto& c : coincidences) {
    if (c.setting >= n_settings) throw AnalysisError("coincidence setting index out of range");
    out[c.setting].add(c.a, c.b);
  }
  return out;
}

Estimate estimate_correlation(const CountMatrix& counts) {
  const auto n = static_cast<double>(counts.total());
  if (n == 0.0) throw AnalysisError("correlation needs at least one coincidence");
  const double e = (static_cast<double>(counts.pp + counts.mm) - static_cast<double>(counts.pm + counts.mp)) / n;
  return {e, std::sqrt(std::max(0.0, 1.0 - e * e) / n)};
}

BellRunResult estimate_chsh(const std::vector<CountMatrix>& runs) {
  if (runs.size() != 4) throw AnalysisError("CHSH needs exactly four setting runs, got " + std::to_string(runs.size()));
  BellRunResult r;
  double var = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    r.counts[k] = runs[k];
    r.correlations[k] = estimate_correlation(runs[k]);
    var += r.correlations[k].sigma * r.correlations[k].sigma;
  }
  r.s.value = r.correlations[0].value + r.correlations[1].value + r.correlations[2].value - r.correlations[3].value;
  r.s.sigma = std::sqrt(var);
  r.significance = r.s.sigma > 0.0 ? (r.s.value - 2.0) / r.s.sigma : 0.0;
  return r;
}

VisibilityFit fit_visibility(const std::vector<ScanPoint>& scan) {
  if (scan.size() < 4) throw AnalysisError("visibility fit needs at least 4 scan points");
  const auto n = static_cast<Eigen::Index>(scan.size());
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  double lo = scan.front().phase;
  double hi = lo;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double phi = scan[static_cast<std::size_t>(i)].phase;
    x(i, 0) = 1.0;
    x(i, 1) = std::cos(phi);
    x(i, 2) = std::sin(phi);
    y(i) = scan[static_cast<std::size_t>(i)].rate;
    lo = std::min(lo, phi);
    hi = std::max(hi, phi);
  }
  const Eigen::Matrix3d xtx = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(xtx, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 1e-10 * es.eigenvalues().maxCoeff()) {
    throw AnalysisError("degenerate scan: phases do not determine a sinusoid");
  }
  const Eigen::Vector3d c = xtx.ldlt().solve(x.transpose() * y);
  if (!(c(0) > 0.0)) throw AnalysisError("non-positive mean rate in visibility fit");

  const double amp = std::hypot(c(1), c(2));
  const double rss = (y - x * c).squaredNorm();
  const double dof = static_cast<double>(n - 3);
  const Eigen::Matrix3d cov = dof > 0.0 ? Eigen::Matrix3d(xtx.inverse() * (rss / dof)) : Eigen::Matrix3d::Zero();

  VisibilityFit fit;
  fit.mean_rate = c(0);
  fit.visibility.value = amp / c(0);
  fit.phase0 = std::atan2(-c(2), c(1));
  fit.covers_half_period = hi - lo >= qcore::kPi - 1e-12;
  Eigen::Vector3d grad;
  if (amp > 0.0) {
    grad << -amp / (c(0) * c(0)), c(1) / (amp * c(0)), c(2) / (amp * c(0));
    fit.visibility.sigma = std::sqrt(std::max(0.0, grad.dot(cov * grad)));
  } else {
    fit.visibility.sigma = std::sqrt(std::max(0.0, cov(1, 1) + cov(2, 2))) / c(0);
  }
  return fit;
}

}  // namespace tbell::analysis
