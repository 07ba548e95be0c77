#include "scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

#include "allan.hpp"
#include "csvio.hpp"
#include "vector_recon.hpp"

namespace nvlock {

namespace fs = std::filesystem;
using nlohmann::json;

LabField ScenarioConfig::bias_field() const {
  const double n = std::sqrt(bias_orientation[0] * bias_orientation[0] +
                             bias_orientation[1] * bias_orientation[1] +
                             bias_orientation[2] * bias_orientation[2]);
  if (n == 0.0) return {0.0, 0.0, 0.0};
  const double s = bias_magnitude_nt / n;
  return {bias_orientation[0] * s, bias_orientation[1] * s, bias_orientation[2] * s};
}

LockRunSetup ScenarioConfig::lock_setup() const {
  LockRunSetup s;
  s.consts = consts;
  s.shape = shape;
  s.noise = noise;
  s.clock = clock;
  s.model = model;
  s.hyperfine_hz = hyperfine_hz;
  s.balanced = balanced;
  return s;
}

namespace {

json channel_to_json(const ChannelSpec& c) {
  return json{{"class", c.cls},
              {"branch", c.plus_branch ? "plus" : "minus"},
              {"m_i", c.m_i},
              {"f_ref_hz", c.f_ref_hz},
              {"f_dev_hz", c.f_dev_hz},
              {"alpha", c.alpha},
              {"k_i_hz_per_v", c.k_i_hz_per_v},
              {"phase_rad", c.phase_rad}};
}

json config_to_json(const ScenarioConfig& c) {
  json j;
  j["constants"] = {{"delta_hz", c.consts.delta_hz},
                    {"beta_t_hz_per_k", c.consts.beta_t_hz_per_k},
                    {"gamma_hz_per_nt", c.consts.gamma_hz_per_nt}};
  j["bias"] = {{"magnitude_nt", c.bias_magnitude_nt},
               {"orientation", c.bias_orientation}};
  j["lines"] = {{"v0_v", c.shape.v0_v},
                {"contrast", c.shape.contrast},
                {"sigma_hz", c.shape.sigma_hz},
                {"hyperfine_hz", c.hyperfine_hz}};
  j["noise"] = {{"white_v_per_sqrt_hz", c.noise.white_v_per_sqrt_hz},
                {"rin_per_sqrt_hz", c.noise.rin_per_sqrt_hz},
                {"drift_amplitude", c.noise.drift_amplitude},
                {"drift_period_s", c.noise.drift_period_s}};
  j["seed"] = c.noise.rng_seed;
  j["clock"] = {{"sample_rate_hz", c.clock.sample_rate_hz}};
  j["model"] = c.model == SpinModel::kLinear ? "linear" : "full";
  j["balanced"] = c.balanced;
  j["channels"] = json::array();
  for (const auto& ch : c.channels) j["channels"].push_back(channel_to_json(ch));
  j["step"] = {{"contrast_levels", c.step.contrast_levels},
               {"step_nt", c.step.step_nt},
               {"t_step_s", c.step.t_step_s},
               {"duration_s", c.step.duration_s},
               {"spread_tol_nt", c.step.spread_tol_nt}};
  j["range"] = {{"ramp_nt", c.range.ramp_nt},
                {"duration_s", c.range.duration_s},
                {"max_error_nt", c.range.max_error_nt},
                {"min_range_ratio", c.range.min_range_ratio}};
  j["vector"] = {{"dwell_s", c.vector.dwell_s},
                 {"cycles_per_segment", c.vector.cycles_per_segment},
                 {"applied_nt", c.vector.applied_nt},
                 {"recovery_tol_nt", c.vector.recovery_tol_nt},
                 {"leakage_tol_nt", c.vector.leakage_tol_nt}};
  j["sensitivity"] = {{"duration_s", c.sensitivity.duration_s},
                      {"densities_v_per_sqrt_hz", c.sensitivity.densities_v_per_sqrt_hz},
                      {"slope_tol", c.sensitivity.slope_tol},
                      {"linearity_tol", c.sensitivity.linearity_tol}};
  j["spectrum"] = {{"f_start_hz", c.spectrum.f_start_hz},
                   {"f_stop_hz", c.spectrum.f_stop_hz},
                   {"step_hz", c.spectrum.step_hz}};
  j["out_dir"] = c.out_dir;
  j["quiet"] = c.quiet;
  return j;
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw std::runtime_error("unknown key '" + it.key() + "' in " + where +
                               " (allowed: see README config schema)");
    }
  }
}

template <typename T>
void get_if(const json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

void parse_channels(const json& arr, std::vector<ChannelSpec>& out) {
  out.clear();
  for (const auto& jc : arr) {
    reject_unknown_keys(jc, {"class", "branch", "m_i", "f_ref_hz", "f_dev_hz", "alpha",
                             "k_i_hz_per_v", "phase_rad"},
                        "channels[]");
    ChannelSpec c;
    get_if(jc, "class", c.cls);
    if (jc.contains("branch")) {
      const std::string b = jc.at("branch").get<std::string>();
      if (b != "plus" && b != "minus") throw std::runtime_error("channel branch must be 'plus' or 'minus'");
      c.plus_branch = b == "plus";
    }
    get_if(jc, "m_i", c.m_i);
    get_if(jc, "f_ref_hz", c.f_ref_hz);
    get_if(jc, "f_dev_hz", c.f_dev_hz);
    get_if(jc, "alpha", c.alpha);
    get_if(jc, "k_i_hz_per_v", c.k_i_hz_per_v);
    get_if(jc, "phase_rad", c.phase_rad);
    out.push_back(c);
  }
}

void validate(const ScenarioConfig& c) {
  if (!c.consts.valid()) throw std::runtime_error("constants: need delta>0, gamma>0, beta_T<0");
  if (!c.shape.valid()) throw std::runtime_error("lines: need v0>0, 0<contrast<1, sigma>0");
  if (c.bias_magnitude_nt < 0 || c.bias_magnitude_nt > kFieldBoundNt) {
    throw std::runtime_error("bias magnitude outside validity bound (0..2e7 nT)");
  }
  if (c.channels.size() < 2) throw std::runtime_error("need at least 2 channels (a resonance pair)");
  for (std::size_t i = 0; i < c.channels.size(); ++i) {
    const auto& ch = c.channels[i];
    if (ch.cls < 0 || ch.cls > 3) throw std::runtime_error("channel class must be 0..3");
    if (ch.m_i < -1 || ch.m_i > 1) throw std::runtime_error("channel m_i must be -1, 0 or +1");
    if (ch.f_ref_hz <= 0.0 || ch.f_ref_hz > kMaxRefHz) {
      throw std::runtime_error("channel f_ref " + format_double(ch.f_ref_hz) +
                               " Hz exceeds the 20 kHz NV response bandwidth bound; lower f_ref_hz");
    }
    if (ch.f_dev_hz <= 0.0) throw std::runtime_error("channel f_dev must be positive");
    if (ch.k_i_hz_per_v <= 0.0) throw std::runtime_error("channel k_i must be positive");
    for (std::size_t j = i + 1; j < c.channels.size(); ++j) {
      if (ch.f_ref_hz == c.channels[j].f_ref_hz) {
        throw std::runtime_error("duplicate channel f_ref " + format_double(ch.f_ref_hz) +
                                 " Hz: demodulation channels must use pairwise distinct f_ref_hz");
      }
    }
    if (c.clock.sample_rate_hz < 20.0 * ch.f_ref_hz) {
      throw std::runtime_error("sample_rate_hz must be at least 20x the largest channel f_ref");
    }
  }
  if (c.vector.dwell_s <= 0.0 || c.vector.cycles_per_segment < 1) {
    throw std::runtime_error("vector: dwell_s > 0 and cycles_per_segment >= 1 required");
  }
  if (c.spectrum.step_hz > c.shape.sigma_hz / 10.0) {
    throw std::runtime_error("spectrum: step_hz must be <= sigma/10 for crossing localization");
  }
}

std::string now_string() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

int most_aligned_class(const ScenarioConfig& cfg) {
  const LabField b = cfg.bias_field();
  int best = 0;
  double bestp = -1.0;
  for (int i = 0; i < 4; ++i) {
    const double p = project_field(b, i);
    if (p > bestp) {
      bestp = p;
      best = i;
    }
  }
  return best;
}

std::array<double, 3> class_axis(int cls) {
  return NvOrientationSet::standard().axes[static_cast<std::size_t>(cls)];
}

ChannelConfig to_channel_config(const ChannelSpec& spec, int cls, bool plus_branch,
                                const ScenarioConfig& cfg) {
  ChannelConfig cc;
  cc.target = {cls, plus_branch, spec.m_i};
  cc.modulation.f_dev_hz = spec.f_dev_hz;
  cc.modulation.f_ref_hz = spec.f_ref_hz;
  cc.lockin.f_ref_hz = spec.f_ref_hz;
  cc.lockin.phase_rad = spec.phase_rad;
  cc.lockin.alpha = spec.alpha;
  cc.lockin.sample_rate_hz = cfg.clock.sample_rate_hz;
  cc.k_i_hz_per_v = spec.k_i_hz_per_v;
  return cc;
}

// The template pair (first minus-branch spec, first plus-branch spec) mapped
// onto the given orientation class.
std::pair<ChannelConfig, ChannelConfig> template_pair(const ScenarioConfig& cfg, int cls) {
  const ChannelSpec* minus = nullptr;
  const ChannelSpec* plus = nullptr;
  for (const auto& ch : cfg.channels) {
    if (!ch.plus_branch && !minus) minus = &ch;
    if (ch.plus_branch && !plus) plus = &ch;
  }
  if (!minus || !plus) throw std::runtime_error("channels must include one minus and one plus branch");
  return {to_channel_config(*minus, cls, false, cfg), to_channel_config(*plus, cls, true, cfg)};
}

LoopAnalysis analyze_channel(const ChannelConfig& cc, const LineShapeParams& shape,
                             double sample_rate_hz) {
  const double g = small_signal_gain(shape, cc.modulation.f_dev_hz).gain_v_per_hz;
  const auto period = static_cast<std::uint64_t>(std::llround(sample_rate_hz / cc.modulation.f_ref_hz));
  const double a_eff = effective_alpha(cc.lockin.alpha_or_default(), period);
  const double f_upd = sample_rate_hz / static_cast<double>(period);
  return closed_loop_analysis(g, a_eff, cc.k_i_hz_per_v, f_upd);
}

void write_loop_report(const fs::path& path, std::span<const ChannelConfig> channels,
                       const LineShapeParams& shape, double sample_rate_hz) {
  std::ofstream out(path);
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const LoopAnalysis an = analyze_channel(channels[i], shape, sample_rate_hz);
    out << "channel " << i << ": g=" << format_double(an.plant_gain_v_per_hz) << " V/Hz"
        << " poles=(" << format_double(an.poles[0].real()) << (an.poles[0].imag() >= 0 ? "+" : "")
        << format_double(an.poles[0].imag()) << "j, " << format_double(an.poles[1].real())
        << (an.poles[1].imag() >= 0 ? "+" : "") << format_double(an.poles[1].imag()) << "j)"
        << " stable=" << (an.stable ? "yes" : "no")
        << " settling_s=" << format_double(an.settling_time_s) << "\n";
  }
}

void export_trace(const fs::path& path, const LoopTrace& trace, double hyperfine_hz,
                  const PhysicalConstants& consts) {
  CsvWriter csv(path, {"t_s", "channel_id", "f_lo_hz", "error_v", "b_nv_nt", "dt_k"});
  // derived series per (minus, plus) pair in channel order
  std::vector<std::vector<DerivedSample>> derived;
  for (std::size_t p = 0; p + 1 < trace.channels.size(); p += 2) {
    derived.push_back(derive_pair_series(trace.channels[p], trace.channels[p + 1], hyperfine_hz, consts));
  }
  for (std::size_t c = 0; c < trace.channels.size(); ++c) {
    const auto& ch = trace.channels[c];
    const auto& der = derived[c / 2];
    std::size_t j = 0;
    for (const auto& s : ch.samples) {
      while (j + 1 < der.size() && der[j + 1].t_s <= s.t_s) ++j;
      const double b = der.empty() ? 0.0 : der[j].b_nv_nt;
      const double dt = der.empty() ? 0.0 : der[j].dt_k;
      csv.row({s.t_s, static_cast<double>(c), s.f_lo_hz, s.error_v, b, dt});
    }
  }
}

struct ArtifactList {
  fs::path dir;
  std::vector<std::pair<std::string, std::string>> items;

  void add(const std::string& name) { items.emplace_back(name, file_digest(dir / name)); }
};

void finish_manifest(const ScenarioConfig& cfg, const std::string& scenario, ArtifactList& art) {
  Manifest m;
  m.scenario = scenario;
  m.version = kVersion;
  m.seed = cfg.noise.rng_seed;
  m.wall_clock = now_string();
  m.config_snapshot = cfg.snapshot.empty() ? config_to_json(cfg).dump() : cfg.snapshot;
  m.artifacts = art.items;
  write_manifest(art.dir, m);
}

void say(const ScenarioConfig& cfg, const std::string& line) {
  if (!cfg.quiet) std::printf("%s\n", line.c_str());
}

double mean_tail(const std::vector<DerivedSample>& s, double t_from,
                 double (*sel)(const DerivedSample&)) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& d : s) {
    if (d.t_s < t_from) continue;
    acc += sel(d);
    ++n;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// step: scale-factor robustness to contrast/laser-power changes
// ---------------------------------------------------------------------------

int scenario_step(const ScenarioConfig& cfg, std::string* message) {
  const auto& sc = cfg.step;
  if (sc.contrast_levels.size() < 2) {
    *message = "step: need >= 2 contrast levels";
    return kStatusConfigError;
  }
  if (sc.t_step_s >= sc.duration_s * 0.7) {
    *message = "step: t_step_s must leave room to settle (<= 0.7 duration)";
    return kStatusConfigError;
  }
  const int cls = most_aligned_class(cfg);
  auto [ch_minus, ch_plus] = template_pair(cfg, cls);
  const ChannelConfig pair_arr[] = {ch_minus, ch_plus};

  ArtifactList art{fs::path(cfg.out_dir), {}};
  fs::create_directories(art.dir);

  // refuse unstable configs up front, with the pole report
  for (double level : sc.contrast_levels) {
    LineShapeParams shape = cfg.shape;
    shape.contrast = level;
    for (const auto& cc : pair_arr) {
      const LoopAnalysis an = analyze_channel(cc, shape, cfg.clock.sample_rate_hz);
      if (!an.stable) {
        write_loop_report(art.dir / "loop_analysis.txt", pair_arr, shape, cfg.clock.sample_rate_hz);
        *message = "step: unstable loop at contrast " + format_double(level) +
                   "; see loop_analysis.txt";
        return kStatusConfigError;
      }
    }
  }
  write_loop_report(art.dir / "loop_analysis.txt", pair_arr, cfg.shape, cfg.clock.sample_rate_hz);
  art.add("loop_analysis.txt");

  WorldTimeline world(cfg.bias_field(), {0.0});
  const auto axis = class_axis(cls);
  world.add_step({sc.t_step_s,
                  {axis[0] * sc.step_nt, axis[1] * sc.step_nt, axis[2] * sc.step_nt}});

  std::vector<double> steady_bnv;
  CsvWriter summary(art.dir / "step_summary.csv",
                    {"level", "contrast", "b_nv_steady_nt", "split_change_hz"});
  for (std::size_t i = 0; i < sc.contrast_levels.size(); ++i) {
    LockRunSetup setup = cfg.lock_setup();
    setup.shape.contrast = sc.contrast_levels[i];
    const LoopTrace trace = run_lock(world, pair_arr, sc.duration_s, setup);
    for (const auto& ch : trace.channels) {
      if (ch.lock_lost) {
        *message = "step: lock lost at contrast " + format_double(sc.contrast_levels[i]);
        return kStatusLockLoss;
      }
    }
    const std::string name = "step_trace_" + std::to_string(i) + ".csv";
    export_trace(art.dir / name, trace, cfg.hyperfine_hz, cfg.consts);
    art.add(name);

    const auto derived = derive_pair_series(trace.channels[0], trace.channels[1], cfg.hyperfine_hz,
                                            cfg.consts);
    const double t_tail = sc.duration_s * 0.9;
    const double b_steady = mean_tail(derived, t_tail, [](const DerivedSample& d) { return d.b_nv_nt; });
    steady_bnv.push_back(b_steady);
    const double split_change = 2.0 * cfg.consts.gamma_hz_per_nt *
                                (b_steady - mean_tail(derived, 0.0, [](const DerivedSample& d) {
                                   return d.b_nv_nt;
                                 }));
    summary.row({static_cast<double>(i), sc.contrast_levels[i], b_steady, split_change});
  }
  summary.close();
  art.add("step_summary.csv");
  finish_manifest(cfg, "step", art);

  const double spread = *std::max_element(steady_bnv.begin(), steady_bnv.end()) -
                        *std::min_element(steady_bnv.begin(), steady_bnv.end());
  say(cfg, "step: steady-state B_NV spread " + format_double(spread) + " nT across " +
               std::to_string(sc.contrast_levels.size()) + " contrast levels (tol " +
               format_double(sc.spread_tol_nt) + ")");
  if (spread >= sc.spread_tol_nt) {
    *message = "step: steady-state spread " + format_double(spread) + " nT exceeds tolerance";
    return kStatusPropertyFail;
  }
  return kStatusOk;
}

// ---------------------------------------------------------------------------
// range: dynamic-range ramp, closed loop vs open-loop readout
// ---------------------------------------------------------------------------

int scenario_range(const ScenarioConfig& cfg, std::string* message) {
  const auto& sc = cfg.range;
  const int cls = most_aligned_class(cfg);
  auto [ch_minus, ch_plus] = template_pair(cfg, cls);
  const ChannelConfig pair_arr[] = {ch_minus, ch_plus};

  ArtifactList art{fs::path(cfg.out_dir), {}};
  fs::create_directories(art.dir);

  const auto axis = class_axis(cls);
  WorldTimeline world(cfg.bias_field(), {0.0});
  const double t0 = sc.duration_s * 0.1;
  world.add_ramp({t0, sc.duration_s,
                  {axis[0] * sc.ramp_nt, axis[1] * sc.ramp_nt, axis[2] * sc.ramp_nt}, true});

  const LoopTrace trace = run_lock(world, pair_arr, sc.duration_s, cfg.lock_setup());
  for (const auto& ch : trace.channels) {
    if (ch.lock_lost) {
      *message = "range: lock lost during ramp";
      return kStatusLockLoss;
    }
  }
  const auto derived = derive_pair_series(trace.channels[0], trace.channels[1], cfg.hyperfine_hz,
                                          cfg.consts);

  // constant lock offset (hyperfine-neighbor pull) calibrated on the pre-ramp tail
  double offset = 0.0;
  {
    std::size_t n = 0;
    for (const auto& d : derived) {
      if (d.t_s < t0 * 0.5 || d.t_s > t0) continue;
      offset += d.b_nv_nt - project_field(world.at(d.t_s).b, cls);
      ++n;
    }
    offset /= n ? static_cast<double>(n) : 1.0;
  }

  double max_err = 0.0;
  {
    CsvWriter csv(art.dir / "range_trace.csv",
                  {"t_s", "b_nv_nt", "truth_nt", "error_nt"});
    for (const auto& d : derived) {
      const double truth = project_field(world.at(d.t_s).b, cls);
      const double err = d.b_nv_nt - offset - truth;
      if (d.t_s >= t0) max_err = std::max(max_err, std::abs(err));
      csv.row({d.t_s, d.b_nv_nt, truth, err});
    }
  }
  art.add("range_trace.csv");

  // open-loop readout of the same ramp: fixed f_LO, scale-factor conversion
  double open_range_measured = 0.0;
  {
    LockRunSetup setup = cfg.lock_setup();
    StreamSynthesizer synth(world, setup.model, setup.consts, setup.hyperfine_hz, setup.shape,
                            setup.noise, setup.clock, setup.balanced);
    const WorldState w0 = world.at(0.0);
    const TransitionSet set0 = all_class_frequencies(w0.b, w0.dt, setup.model, setup.consts,
                                                     setup.hyperfine_hz);
    ModulationParams mod = ch_plus.modulation;
    mod.f_lo_hz = set0.line_hz(cls, true, ch_plus.target.m_i);
    LockInConfig li = ch_plus.lockin;
    li.sample_rate_hz = setup.clock.sample_rate_hz;
    LockInState st;
    const auto period = static_cast<std::uint64_t>(
        std::llround(setup.clock.sample_rate_hz / mod.f_ref_hz));
    // sample-grid-snapped reference, same convention as the closed loop
    mod.f_ref_hz = setup.clock.sample_rate_hz / static_cast<double>(period);
    li.f_ref_hz = mod.f_ref_hz;
    // measured scale factor; the analytic small-signal gain is a small-f_dev
    // approximation and is off at f_dev ~ sigma
    double g = small_signal_gain(cfg.shape, mod.f_dev_hz).gain_v_per_hz;
    {
      std::vector<double> cal_centers;
      for (int mi = -1; mi <= 1; ++mi) cal_centers.push_back(set0.line_hz(cls, true, mi));
      const double dprobe = cfg.shape.sigma_hz / 10.0;
      const auto pts = lockin_spectrum(li, mod, cfg.shape, cal_centers, mod.f_lo_hz - dprobe,
                                       mod.f_lo_hz + dprobe, 2.0 * dprobe);
      if (pts.size() >= 2) {
        g = (pts.front().in_phase_v - pts.back().in_phase_v) /
            (pts.back().f_lo_hz - pts.front().f_lo_hz);
      }
    }
    const auto nsamp = static_cast<std::uint64_t>(std::llround(sc.duration_s * setup.clock.sample_rate_hz));
    double acc = 0.0;
    std::uint64_t acc_n = 0;
    CsvWriter csv(art.dir / "range_openloop.csv", {"t_s", "truth_detuning_nt", "estimate_nt"});
    double est_offset = 0.0;
    bool have_offset = false;
    for (std::uint64_t k = 0; k < nsamp; ++k) {
      const double t = synth.time_s();
      const double drive[] = {fm_frequency(t, mod)};
      const IQ iq = demodulate_step(st, synth.next(drive), li);
      acc += iq.in_phase_v;
      if (++acc_n == period) {
        const double e = acc / static_cast<double>(period);
        acc = 0.0;
        acc_n = 0;
        const double est_nt = (e / g) / cfg.consts.gamma_hz_per_nt;
        const double truth_nt = project_field(world.at(t).b, cls) -
                                project_field(world.at(0.0).b, cls);
        if (t > t0 * 0.5 && t < t0 && !have_offset) {
          est_offset = est_nt;
          have_offset = true;
        }
        const double est = est_nt - est_offset;
        csv.row({t, truth_nt, est});
        // largest detuning the open-loop readout still reports to 10 percent
        if (t >= t0 && truth_nt > 500.0 && std::abs(est - truth_nt) <= 0.1 * truth_nt) {
          open_range_measured = std::max(open_range_measured, truth_nt);
        }
      }
    }
  }
  art.add("range_openloop.csv");
  finish_manifest(cfg, "range", art);

  const double open_nominal = open_loop_linear_range_nt(cfg.shape.sigma_hz, cfg.consts);
  const double ratio = sc.ramp_nt / open_nominal;
  say(cfg, "range: closed-loop max tracking error " + format_double(max_err) + " nT (tol " +
               format_double(sc.max_error_nt) + "); open-loop linear range measured " +
               format_double(open_range_measured) + " nT (nominal " + format_double(open_nominal) +
               "); range ratio " + format_double(ratio));
  if (max_err >= sc.max_error_nt) {
    *message = "range: tracking error " + format_double(max_err) + " nT exceeds tolerance";
    return kStatusPropertyFail;
  }
  if (ratio < sc.min_range_ratio) {
    *message = "range: closed/open range ratio " + format_double(ratio) + " below bound";
    return kStatusPropertyFail;
  }
  if (open_range_measured < open_nominal / 3.0 || open_range_measured > open_nominal * 3.0) {
    *message = "range: measured open-loop range " + format_double(open_range_measured) +
               " nT inconsistent with nominal " + format_double(open_nominal);
    return kStatusPropertyFail;
  }
  return kStatusOk;
}

// ---------------------------------------------------------------------------
// vector: sequential class locking + field reconstruction
// ---------------------------------------------------------------------------

int scenario_vector(const ScenarioConfig& cfg, std::string* message) {
  const auto& sc = cfg.vector;

  // bias must spectrally separate all eight resonances
  {
    const TransitionSet set = all_class_frequencies(cfg.bias_field(), {0.0}, cfg.model, cfg.consts,
                                                    cfg.hyperfine_hz);
    std::vector<double> centers;
    for (int i = 0; i < 4; ++i) {
      centers.push_back(set.classes[static_cast<std::size_t>(i)].f_minus_hz);
      centers.push_back(set.classes[static_cast<std::size_t>(i)].f_plus_hz);
    }
    std::sort(centers.begin(), centers.end());
    for (std::size_t i = 1; i < centers.size(); ++i) {
      if (centers[i] - centers[i - 1] < 10.0 * cfg.shape.sigma_hz) {
        *message = "vector: bias orientation does not separate the eight resonances (gap " +
                   format_double(centers[i] - centers[i - 1]) + " Hz < 10 sigma)";
        return kStatusConfigError;
      }
    }
  }

  std::vector<ChannelConfig> pairs;
  for (int cls = 0; cls < 4; ++cls) {
    auto [lo, hi] = template_pair(cfg, cls);
    pairs.push_back(lo);
    pairs.push_back(hi);
  }

  const double seg_s = sc.dwell_s * 4.0 * sc.cycles_per_segment;
  WorldTimeline world(cfg.bias_field(), {0.0});
  const double a = sc.applied_nt;
  world.add_step({seg_s, {a, 0.0, 0.0}});
  world.add_step({2.0 * seg_s, {-a, a, 0.0}});
  world.add_step({3.0 * seg_s, {0.0, -a, a}});

  const int cycles = 4 * sc.cycles_per_segment;
  SequenceResult seq;
  try {
    seq = sequence_classes(world, pairs, sc.dwell_s, cycles, cfg.lock_setup());
  } catch (const std::invalid_argument& e) {
    *message = std::string("vector: ") + e.what();
    return kStatusConfigError;
  }
  for (const auto& ch : seq.trace.channels) {
    if (ch.lock_lost) {
      *message = "vector: lock lost";
      return kStatusLockLoss;
    }
  }

  ArtifactList art{fs::path(cfg.out_dir), {}};
  fs::create_directories(art.dir);

  {
    CsvWriter csv(art.dir / "vector_freqs.csv",
                  {"t_s", "class", "f_minus_hz", "f_plus_hz", "reacquired", "flagged"});
    for (const auto& v : seq.visits) {
      csv.row({v.t_end_s, static_cast<double>(v.cls), v.f_minus_locked_hz, v.f_plus_locked_hz,
               v.reacquired ? 1.0 : 0.0, v.flagged ? 1.0 : 0.0});
    }
  }
  art.add("vector_freqs.csv");

  // per-cycle reconstruction from the hyperfine-corrected locked centers
  const int mi_minus = pairs[0].target.m_i;
  const int mi_plus = pairs[1].target.m_i;
  std::vector<ReconResult> recons;
  std::vector<std::pair<double, double>> recon_span;  // first visit start, last visit end
  const double step_times[3] = {seg_s, 2.0 * seg_s, 3.0 * seg_s};
  auto segment_of = [&](double t) {
    int s = 0;
    for (double st : step_times) s += t >= st ? 1 : 0;
    return s;
  };
  {
    CsvWriter csv(art.dir / "vector_recon.csv",
                  {"t_s", "bx_nt", "by_nt", "bz_nt", "dt_k", "residual_hz", "converged"});
    for (int cy = 0; cy < cycles; ++cy) {
      std::array<double, 8> meas{};
      ProjectionSet proj;
      bool flagged = false;
      double t_begin = 0.0;
      double t_end = 0.0;
      for (int cls = 0; cls < 4; ++cls) {
        const ClassVisit& v = seq.visits[static_cast<std::size_t>(cy) * 4 + static_cast<std::size_t>(cls)];
        flagged = flagged || v.flagged;
        if (cls == 0) t_begin = v.t_start_s;
        t_end = v.t_end_s;
        const double fm = v.f_minus_locked_hz - mi_minus * cfg.hyperfine_hz;
        const double fp = v.f_plus_locked_hz - mi_plus * cfg.hyperfine_hz;
        meas[static_cast<std::size_t>(cls) * 2] = fm;
        meas[static_cast<std::size_t>(cls) * 2 + 1] = fp;
        const PairInversion inv = field_from_pair(fp, fm, cfg.consts);
        proj.b_nv_nt[static_cast<std::size_t>(cls)] = inv.b_nv_nt;
        proj.dt_k[static_cast<std::size_t>(cls)] = inv.dt_k;
      }
      if (flagged) continue;
      const LinearRecon init = linear_reconstruct(proj);
      const ReconResult r = nonlinear_reconstruct(meas, init, cfg.model, cfg.consts);
      recons.push_back(r);
      recon_span.emplace_back(t_begin, t_end);
      csv.row({t_end, r.b.bx_nt, r.b.by_nt, r.b.bz_nt, r.dt_k, r.residual_norm_hz,
               r.converged ? 1.0 : 0.0});
    }
  }
  art.add("vector_recon.csv");

  if (recons.size() < static_cast<std::size_t>(cycles) / 2) {
    *message = "vector: too many flagged cycles";
    return kStatusLockLoss;
  }

  // segment means; cycles straddling a field step are dropped
  auto segment_mean = [&](int seg) {
    LabField acc{};
    std::size_t n = 0;
    for (std::size_t i = 0; i < recons.size(); ++i) {
      if (segment_of(recon_span[i].first) != seg || segment_of(recon_span[i].second) != seg) {
        continue;
      }
      acc = acc + recons[i].b;
      ++n;
    }
    return acc * (n ? 1.0 / static_cast<double>(n) : 0.0);
  };

  const LabField base = segment_mean(0);
  bool pass = true;
  std::string detail;
  CsvWriter summary(art.dir / "vector_summary.csv",
                    {"segment", "dbx_nt", "dby_nt", "dbz_nt"});
  for (int seg = 1; seg <= 3; ++seg) {
    const LabField d = segment_mean(seg) - base;
    const double comps[3] = {d.bx_nt, d.by_nt, d.bz_nt};
    summary.row({static_cast<double>(seg), d.bx_nt, d.by_nt, d.bz_nt});
    for (int k = 0; k < 3; ++k) {
      const bool applied_axis = (k == seg - 1);
      const double err = applied_axis ? std::abs(comps[k] - sc.applied_nt) : std::abs(comps[k]);
      const double tol = applied_axis ? sc.recovery_tol_nt : sc.leakage_tol_nt;
      if (err > tol) {
        pass = false;
        detail += " seg" + std::to_string(seg) + (applied_axis ? " recovery " : " leakage ") +
                  format_double(err) + " nT;";
      }
    }
  }
  summary.close();
  art.add("vector_summary.csv");
  finish_manifest(cfg, "vector", art);

  say(cfg, std::string("vector: applied-field recovery ") + (pass ? "ok" : "FAILED") +
               " across 3 axes (tol " + format_double(sc.recovery_tol_nt) + "/" +
               format_double(sc.leakage_tol_nt) + " nT)");
  if (!pass) {
    *message = "vector: recovery outside tolerance:" + detail;
    return kStatusPropertyFail;
  }
  return kStatusOk;
}

// ---------------------------------------------------------------------------
// sensitivity: Allan/ASD noise characterization (scaling properties only)
// ---------------------------------------------------------------------------

int scenario_sensitivity(const ScenarioConfig& cfg, std::string* message) {
  const auto& sc = cfg.sensitivity;
  if (sc.densities_v_per_sqrt_hz.empty()) {
    *message = "sensitivity: need at least one noise density";
    return kStatusConfigError;
  }
  const int cls = most_aligned_class(cfg);
  auto [ch_minus, ch_plus] = template_pair(cfg, cls);
  const ChannelConfig pair_arr[] = {ch_minus, ch_plus};
  WorldTimeline world(cfg.bias_field(), {0.0});

  const LoopAnalysis an = analyze_channel(ch_minus, cfg.shape, cfg.clock.sample_rate_hz);
  if (!an.stable) {
    *message = "sensitivity: unstable loop config";
    return kStatusConfigError;
  }
  const double pdom = std::max(std::abs(an.poles[0]), std::abs(an.poles[1]));
  const double f_upd = ch_minus.modulation.f_ref_hz;
  const double tau_loop = 1.0 / ((1.0 - pdom) * f_upd);

  ArtifactList art{fs::path(cfg.out_dir), {}};
  fs::create_directories(art.dir);

  std::ofstream report(art.dir / "sensitivity_report.txt");
  std::vector<double> nefs;
  std::vector<double> slopes;
  bool pass = true;
  std::string detail;

  for (std::size_t di = 0; di < sc.densities_v_per_sqrt_hz.size(); ++di) {
    const double density = sc.densities_v_per_sqrt_hz[di];
    LockRunSetup setup = cfg.lock_setup();
    setup.noise.white_v_per_sqrt_hz = density;
    const LoopTrace trace = run_lock(world, pair_arr, sc.duration_s, setup);
    const auto derived = derive_pair_series(trace.channels[0], trace.channels[1], cfg.hyperfine_hz,
                                            cfg.consts);
    // drop the settle transient, keep an evenly sampled series
    std::vector<double> b;
    const double t_skip = 20.0 * tau_loop;
    for (const auto& d : derived) {
      if (d.t_s >= t_skip) b.push_back(d.b_nv_nt);
    }
    const double tau0 = 1.0 / f_upd;
    const auto allan = allan_deviation(b, tau0);
    // mean removal: the static projection otherwise leaks through the window
    // into the low bins
    double mean = 0.0;
    for (double v : b) mean += v;
    mean /= b.empty() ? 1.0 : static_cast<double>(b.size());
    for (double& v : b) v -= mean;
    const auto asd = amplitude_spectral_density(b, f_upd);

    const std::string aname = "sensitivity_allan_" + std::to_string(di) + ".csv";
    {
      CsvWriter csv(art.dir / aname, {"tau_s", "adev_nt"});
      for (const auto& p : allan) csv.row({p.tau_s, p.adev});
    }
    art.add(aname);
    const std::string sname = "sensitivity_asd_" + std::to_string(di) + ".csv";
    {
      CsvWriter csv(art.dir / sname, {"freq_hz", "asd_nt_per_sqrt_hz"});
      for (const auto& p : asd) csv.row({p.freq_hz, p.asd});
    }
    art.add(sname);

    std::vector<double> taus, adevs, freqs, asds;
    for (const auto& p : allan) {
      taus.push_back(p.tau_s);
      adevs.push_back(p.adev);
    }
    for (const auto& p : asd) {
      freqs.push_back(p.freq_hz);
      asds.push_back(p.asd);
    }
    const double fit_lo = std::max(10.0 * tau_loop, 5.0 * tau0);
    const double fit_hi = sc.duration_s / 10.0;
    double nef = 0.0;  // stays 0 when the run is noiseless to double precision
    try {
      nef = loglog_coefficient(taus, adevs, -0.5, fit_lo, fit_hi) * std::sqrt(2.0);
    } catch (const std::invalid_argument&) {
    }
    nefs.push_back(nef);

    if (density > 0.0) {
      const double slope = loglog_slope(taus, adevs, fit_lo, fit_hi);
      slopes.push_back(slope);
      const double loop_bw_hz = (1.0 - pdom) * f_upd / (2.0 * kPi);
      const double asd_slope = loglog_slope(freqs, asds, std::max(0.5, 3.0 / sc.duration_s),
                                            0.3 * loop_bw_hz);
      report << "density " << format_double(density) << " V/rtHz: nef "
             << format_double(nef) << " nT/rtHz, allan slope " << format_double(slope)
             << ", asd slope " << format_double(asd_slope) << "\n";
      if (std::abs(slope + 0.5) > sc.slope_tol) {
        pass = false;
        detail += " allan slope " + format_double(slope) + ";";
      }
      if (std::abs(asd_slope) > 0.3) {
        pass = false;
        detail += " asd slope " + format_double(asd_slope) + ";";
      }
    } else {
      report << "density 0: nef " << format_double(nef) << " nT/rtHz (quantization floor)\n";
      if (nef >= 1.0) {
        pass = false;
        detail += " zero-noise nef " + format_double(nef) + " nT;";
      }
    }
  }

  // linearity: noise-equivalent field scales with the density
  for (std::size_t i = 0; i + 1 < sc.densities_v_per_sqrt_hz.size(); ++i) {
    const double d0 = sc.densities_v_per_sqrt_hz[i];
    const double d1 = sc.densities_v_per_sqrt_hz[i + 1];
    if (d0 <= 0.0 || d1 <= 0.0) continue;
    const double expect = d1 / d0;
    const double got = nefs[i + 1] / nefs[i];
    report << "linearity " << format_double(d0) << "->" << format_double(d1) << ": nef ratio "
           << format_double(got) << " vs " << format_double(expect) << "\n";
    if (std::abs(got / expect - 1.0) > sc.linearity_tol) {
      pass = false;
      detail += " linearity ratio " + format_double(got) + " vs " + format_double(expect) + ";";
    }
  }
  report.close();
  art.add("sensitivity_report.txt");
  finish_manifest(cfg, "sensitivity", art);

  say(cfg, std::string("sensitivity: ") + (pass ? "ok" : "FAILED") + ", see sensitivity_report.txt");
  if (!pass) {
    *message = "sensitivity:" + detail;
    return kStatusPropertyFail;
  }
  return kStatusOk;
}

// ---------------------------------------------------------------------------
// spectrum: swept lock-in ODMR dump
// ---------------------------------------------------------------------------

int scenario_spectrum(const ScenarioConfig& cfg, std::string* message) {
  const auto& sc = cfg.spectrum;
  const TransitionSet set = all_class_frequencies(cfg.bias_field(), {0.0}, cfg.model, cfg.consts,
                                                  cfg.hyperfine_hz);
  std::vector<double> centers;
  for (int cls = 0; cls < 4; ++cls) {
    for (int br = 0; br < 2; ++br) {
      for (int mi = -1; mi <= 1; ++mi) centers.push_back(set.line_hz(cls, br == 1, mi));
    }
  }

  const ChannelSpec& tmpl = cfg.channels.front();
  LockInConfig li;
  li.f_ref_hz = tmpl.f_ref_hz;
  li.phase_rad = tmpl.phase_rad;
  li.alpha = tmpl.alpha;
  li.sample_rate_hz = cfg.clock.sample_rate_hz;
  ModulationParams mod;
  mod.f_dev_hz = tmpl.f_dev_hz;
  mod.f_ref_hz = tmpl.f_ref_hz;

  const auto points = lockin_spectrum(li, mod, cfg.shape, centers, sc.f_start_hz, sc.f_stop_hz,
                                      sc.step_hz);

  ArtifactList art{fs::path(cfg.out_dir), {}};
  fs::create_directories(art.dir);
  {
    CsvWriter csv(art.dir / "spectrum.csv", {"f_lo_hz", "in_phase_v", "quadrature_v"});
    for (const auto& p : points) csv.row({p.f_lo_hz, p.in_phase_v, p.quadrature_v});
  }
  art.add("spectrum.csv");
  finish_manifest(cfg, "spectrum", art);

  int crossings = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i - 1].in_phase_v > 0.0 && points[i].in_phase_v <= 0.0) ++crossings;
  }
  const int expected = cfg.bias_magnitude_nt == 0.0 ? 3 : 24;
  say(cfg, "spectrum: " + std::to_string(crossings) + " negative-slope zero crossings (expected " +
               std::to_string(expected) + ")");
  if (crossings != expected) {
    *message = "spectrum: found " + std::to_string(crossings) + " crossings, expected " +
               std::to_string(expected);
    return kStatusPropertyFail;
  }
  return kStatusOk;
}

}  // namespace

ScenarioConfig default_config() {
  ScenarioConfig cfg;
  ChannelSpec lower;  // |0,-1> -> |-1,-1>
  lower.cls = 0;
  lower.plus_branch = false;
  lower.m_i = -1;
  lower.f_ref_hz = 1.8240e3;
  ChannelSpec upper;  // |0,0> -> |+1,0>
  upper.cls = 0;
  upper.plus_branch = true;
  upper.m_i = 0;
  upper.f_ref_hz = 2.2813e3;
  cfg.channels = {lower, upper};
  cfg.snapshot = config_to_json(cfg).dump();
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config parse error: " + std::string(e.what()));
  }

  reject_unknown_keys(j, {"constants", "bias", "lines", "noise", "seed", "clock", "model",
                          "balanced", "channels", "step", "range", "vector", "sensitivity",
                          "spectrum", "out_dir", "quiet"},
                      "top level");

  ScenarioConfig cfg = default_config();
  if (j.contains("constants")) {
    const auto& s = j["constants"];
    reject_unknown_keys(s, {"delta_hz", "beta_t_hz_per_k", "gamma_hz_per_nt"}, "constants");
    get_if(s, "delta_hz", cfg.consts.delta_hz);
    get_if(s, "beta_t_hz_per_k", cfg.consts.beta_t_hz_per_k);
    get_if(s, "gamma_hz_per_nt", cfg.consts.gamma_hz_per_nt);
  }
  if (j.contains("bias")) {
    const auto& s = j["bias"];
    reject_unknown_keys(s, {"magnitude_nt", "orientation"}, "bias");
    get_if(s, "magnitude_nt", cfg.bias_magnitude_nt);
    get_if(s, "orientation", cfg.bias_orientation);
  }
  if (j.contains("lines")) {
    const auto& s = j["lines"];
    reject_unknown_keys(s, {"v0_v", "contrast", "sigma_hz", "hyperfine_hz"}, "lines");
    get_if(s, "v0_v", cfg.shape.v0_v);
    get_if(s, "contrast", cfg.shape.contrast);
    get_if(s, "sigma_hz", cfg.shape.sigma_hz);
    get_if(s, "hyperfine_hz", cfg.hyperfine_hz);
  }
  if (j.contains("noise")) {
    const auto& s = j["noise"];
    reject_unknown_keys(s, {"white_v_per_sqrt_hz", "rin_per_sqrt_hz", "drift_amplitude",
                            "drift_period_s"},
                        "noise");
    get_if(s, "white_v_per_sqrt_hz", cfg.noise.white_v_per_sqrt_hz);
    get_if(s, "rin_per_sqrt_hz", cfg.noise.rin_per_sqrt_hz);
    get_if(s, "drift_amplitude", cfg.noise.drift_amplitude);
    get_if(s, "drift_period_s", cfg.noise.drift_period_s);
  }
  get_if(j, "seed", cfg.noise.rng_seed);
  if (j.contains("clock")) {
    const auto& s = j["clock"];
    reject_unknown_keys(s, {"sample_rate_hz"}, "clock");
    get_if(s, "sample_rate_hz", cfg.clock.sample_rate_hz);
  }
  if (j.contains("model")) {
    const std::string m = j["model"].get<std::string>();
    if (m == "linear") {
      cfg.model = SpinModel::kLinear;
    } else if (m == "full") {
      cfg.model = SpinModel::kFull;
    } else {
      throw std::runtime_error("model must be 'linear' or 'full'");
    }
  }
  get_if(j, "balanced", cfg.balanced);
  if (j.contains("channels")) parse_channels(j["channels"], cfg.channels);
  if (j.contains("step")) {
    const auto& s = j["step"];
    reject_unknown_keys(s, {"contrast_levels", "step_nt", "t_step_s", "duration_s", "spread_tol_nt"},
                        "step");
    get_if(s, "contrast_levels", cfg.step.contrast_levels);
    get_if(s, "step_nt", cfg.step.step_nt);
    get_if(s, "t_step_s", cfg.step.t_step_s);
    get_if(s, "duration_s", cfg.step.duration_s);
    get_if(s, "spread_tol_nt", cfg.step.spread_tol_nt);
  }
  if (j.contains("range")) {
    const auto& s = j["range"];
    reject_unknown_keys(s, {"ramp_nt", "duration_s", "max_error_nt", "min_range_ratio"}, "range");
    get_if(s, "ramp_nt", cfg.range.ramp_nt);
    get_if(s, "duration_s", cfg.range.duration_s);
    get_if(s, "max_error_nt", cfg.range.max_error_nt);
    get_if(s, "min_range_ratio", cfg.range.min_range_ratio);
  }
  if (j.contains("vector")) {
    const auto& s = j["vector"];
    reject_unknown_keys(s, {"dwell_s", "cycles_per_segment", "applied_nt", "recovery_tol_nt",
                            "leakage_tol_nt"},
                        "vector");
    get_if(s, "dwell_s", cfg.vector.dwell_s);
    get_if(s, "cycles_per_segment", cfg.vector.cycles_per_segment);
    get_if(s, "applied_nt", cfg.vector.applied_nt);
    get_if(s, "recovery_tol_nt", cfg.vector.recovery_tol_nt);
    get_if(s, "leakage_tol_nt", cfg.vector.leakage_tol_nt);
  }
  if (j.contains("sensitivity")) {
    const auto& s = j["sensitivity"];
    reject_unknown_keys(s, {"duration_s", "densities_v_per_sqrt_hz", "slope_tol", "linearity_tol"},
                        "sensitivity");
    get_if(s, "duration_s", cfg.sensitivity.duration_s);
    get_if(s, "densities_v_per_sqrt_hz", cfg.sensitivity.densities_v_per_sqrt_hz);
    get_if(s, "slope_tol", cfg.sensitivity.slope_tol);
    get_if(s, "linearity_tol", cfg.sensitivity.linearity_tol);
  }
  if (j.contains("spectrum")) {
    const auto& s = j["spectrum"];
    reject_unknown_keys(s, {"f_start_hz", "f_stop_hz", "step_hz"}, "spectrum");
    get_if(s, "f_start_hz", cfg.spectrum.f_start_hz);
    get_if(s, "f_stop_hz", cfg.spectrum.f_stop_hz);
    get_if(s, "step_hz", cfg.spectrum.step_hz);
  }
  get_if(j, "out_dir", cfg.out_dir);
  get_if(j, "quiet", cfg.quiet);

  validate(cfg);
  cfg.snapshot = config_to_json(cfg).dump();
  return cfg;
}

int run_scenario(const ScenarioConfig& cfg, const std::string& name, std::string* message) {
  std::string local;
  std::string* msg = message ? message : &local;
  try {
    validate(cfg);
    if (name == "step") return scenario_step(cfg, msg);
    if (name == "range") return scenario_range(cfg, msg);
    if (name == "vector") return scenario_vector(cfg, msg);
    if (name == "sensitivity") return scenario_sensitivity(cfg, msg);
    if (name == "spectrum") return scenario_spectrum(cfg, msg);
    *msg = "unknown scenario '" + name + "' (step|range|vector|sensitivity|spectrum)";
    return kStatusConfigError;
  } catch (const std::exception& e) {
    *msg = e.what();
    return kStatusConfigError;
  }
}

int verify_run(const std::string& out_dir, std::string* message) {
  const std::string err = verify_manifest(out_dir);
  if (err.empty()) return kStatusOk;
  if (message) *message = err;
  return kStatusPropertyFail;
}

}  // namespace nvlock
