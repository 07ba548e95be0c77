#include "odmr_signal.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace nvlock {

double fm_frequency(double t_s, const ModulationParams& m) {
  return m.f_lo_hz + m.f_dev_hz * std::cos(2.0 * kPi * m.f_ref_hz * t_s);
}

double dip_sum(double f_hz, const LineShapeParams& shape, std::span<const double> centers_hz) {
  const double s2 = shape.sigma_hz * shape.sigma_hz;
  double sum = 0.0;
  for (double c : centers_hz) {
    const double d = f_hz - c;
    sum += shape.contrast * s2 / (d * d + s2);
  }
  return sum;
}

double odmr_response(double f_hz, const LineShapeParams& shape, std::span<const double> centers_hz) {
  return shape.v0_v * (1.0 - dip_sum(f_hz, shape, centers_hz));
}

StreamSynthesizer::StreamSynthesizer(const WorldTimeline& world, SpinModel model,
                                     const PhysicalConstants& consts, double hyperfine_hz,
                                     LineShapeParams shape, NoiseParams noise, SimClock clock,
                                     bool balanced)
    : world_(world),
      model_(model),
      consts_(consts),
      hyperfine_hz_(hyperfine_hz),
      shape_(shape),
      noise_(noise),
      clock_(clock),
      balanced_(balanced),
      rng_(noise.rng_seed) {
  if (!shape_.valid()) throw std::invalid_argument("invalid line shape parameters");
  if (clock_.sample_rate_hz <= 0.0) throw std::invalid_argument("sample rate must be positive");
  const double nyq_bw = clock_.sample_rate_hz / 2.0;
  white_sd_ = noise_.white_v_per_sqrt_hz * std::sqrt(nyq_bw);
  rin_sd_ = noise_.rin_per_sqrt_hz * std::sqrt(nyq_bw);
}

void StreamSynthesizer::refresh_lines(const WorldState& w) {
  if (have_world_ && w.b.bx_nt == cached_world_.b.bx_nt && w.b.by_nt == cached_world_.b.by_nt &&
      w.b.bz_nt == cached_world_.b.bz_nt && w.dt.dt_k == cached_world_.dt.dt_k) {
    return;
  }
  const TransitionSet set = all_class_frequencies(w.b, w.dt, model_, consts_, hyperfine_hz_);
  line_centers_.clear();
  for (int cls = 0; cls < 4; ++cls) {
    for (int branch = 0; branch < 2; ++branch) {
      for (int mi = -1; mi <= 1; ++mi) {
        line_centers_.push_back(set.line_hz(cls, branch == 1, mi));
      }
    }
  }
  cached_world_ = w;
  have_world_ = true;
}

double StreamSynthesizer::next(std::span<const double> drive_freqs_hz) {
  const double t = time_s();
  refresh_lines(world_.at(t));
  double dips = 0.0;
  for (double f : drive_freqs_hz) {
    dips += dip_sum(f, shape_, line_centers_);
  }
  double v = shape_.v0_v * (1.0 - dips);
  if (!balanced_) {
    double common = 1.0;
    if (noise_.drift_amplitude != 0.0) {
      common += noise_.drift_amplitude * std::sin(2.0 * kPi * t / noise_.drift_period_s);
    }
    if (rin_sd_ != 0.0) {
      common += rin_sd_ * gauss_(rng_);
    }
    v *= common;
  } else if (rin_sd_ != 0.0) {
    gauss_(rng_);  // keep the draw sequence aligned with the unbalanced stream
  }
  if (white_sd_ != 0.0) {
    v += white_sd_ * gauss_(rng_);
  }
  ++tick_;
  return v;
}

std::vector<double> synthesize_samples(double duration_s, std::span<const ModulationParams> channels,
                                       const WorldTimeline& world, SpinModel model,
                                       const PhysicalConstants& consts, double hyperfine_hz,
                                       const LineShapeParams& shape, const NoiseParams& noise,
                                       SimClock clock, bool balanced) {
  for (std::size_t i = 0; i < channels.size(); ++i) {
    for (std::size_t j = i + 1; j < channels.size(); ++j) {
      if (channels[i].f_ref_hz == channels[j].f_ref_hz) {
        throw std::invalid_argument("channel f_ref values must be pairwise distinct");
      }
    }
    if (channels[i].f_ref_hz * 20.0 > clock.sample_rate_hz) {
      throw std::invalid_argument("sample rate below 20x f_ref");
    }
  }
  StreamSynthesizer synth(world, model, consts, hyperfine_hz, shape, noise, clock, balanced);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * clock.sample_rate_hz));
  std::vector<double> out;
  out.reserve(n);
  std::vector<double> drives(channels.size());
  for (std::size_t k = 0; k < n; ++k) {
    const double t = synth.time_s();
    for (std::size_t c = 0; c < channels.size(); ++c) drives[c] = fm_frequency(t, channels[c]);
    out.push_back(synth.next(drives));
  }
  return out;
}

void dump_stream(const std::string& path_base, std::span<const double> samples,
                 double sample_rate_hz, std::uint64_t seed) {
  std::ofstream bin(path_base + ".f64", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + path_base + ".f64");
  for (double s : samples) {
    // assumes little-endian host, which the build targets
    bin.write(reinterpret_cast<const char*>(&s), sizeof(double));
  }
  std::ofstream hdr(path_base + ".hdr");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "sample_rate_hz: %.17g\nn_samples: %zu\nduration_s: %.17g\nseed: %llu\n",
                sample_rate_hz, samples.size(), static_cast<double>(samples.size()) / sample_rate_hz,
                static_cast<unsigned long long>(seed));
  hdr << buf;
}

}  // namespace nvlock
