#include "nvlock.h"

#include <complex>
#include <exception>
#include <string>

#include "core/scenario.hpp"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

nvlk_status catch_all() {
  try {
    throw;
  } catch (const std::exception& e) {
    set_error(e.what());
  } catch (...) {
    set_error("unknown error");
  }
  return NVLK_ERR_CONFIG;
}

}  // namespace

struct nvlk_config {
  nvlock::ScenarioConfig cfg;
};

extern "C" {

const char* nvlk_version(void) { return nvlock::kVersion; }

const char* nvlk_last_error(void) { return g_last_error.c_str(); }

nvlk_config* nvlk_config_default(void) {
  set_error("");
  return new nvlk_config{nvlock::default_config()};
}

nvlk_config* nvlk_config_load(const char* path) {
  set_error("");
  if (!path) {
    set_error("null path");
    return nullptr;
  }
  try {
    return new nvlk_config{nvlock::load_config(path)};
  } catch (...) {
    catch_all();
    return nullptr;
  }
}

void nvlk_config_free(nvlk_config* cfg) { delete cfg; }

nvlk_status nvlk_config_set_seed(nvlk_config* cfg, uint64_t seed) {
  if (!cfg) {
    set_error("null config");
    return NVLK_ERR_CONFIG;
  }
  cfg->cfg.noise.rng_seed = seed;
  return NVLK_OK;
}

nvlk_status nvlk_config_set_out_dir(nvlk_config* cfg, const char* dir) {
  if (!cfg || !dir || !*dir) {
    set_error("null config or empty out_dir");
    return NVLK_ERR_CONFIG;
  }
  cfg->cfg.out_dir = dir;
  return NVLK_OK;
}

nvlk_status nvlk_config_set_quiet(nvlk_config* cfg, int quiet) {
  if (!cfg) {
    set_error("null config");
    return NVLK_ERR_CONFIG;
  }
  cfg->cfg.quiet = quiet != 0;
  return NVLK_OK;
}

nvlk_status nvlk_run_scenario(const nvlk_config* cfg, const char* name) {
  set_error("");
  if (!cfg || !name) {
    set_error("null config or scenario name");
    return NVLK_ERR_CONFIG;
  }
  try {
    std::string message;
    const int status = nvlock::run_scenario(cfg->cfg, name, &message);
    if (status != nvlock::kStatusOk) set_error(message);
    return static_cast<nvlk_status>(status);
  } catch (...) {
    return catch_all();
  }
}

nvlk_status nvlk_verify_manifest(const char* out_dir) {
  set_error("");
  if (!out_dir) {
    set_error("null out_dir");
    return NVLK_ERR_CONFIG;
  }
  try {
    std::string message;
    const int status = nvlock::verify_run(out_dir, &message);
    if (status != nvlock::kStatusOk) set_error(message);
    return static_cast<nvlk_status>(status);
  } catch (...) {
    return catch_all();
  }
}

nvlk_status nvlk_transitions_linear(double b_nv_nt, double dt_k, double* f_minus_hz,
                                    double* f_plus_hz) {
  set_error("");
  if (!f_minus_hz || !f_plus_hz) {
    set_error("null output pointer");
    return NVLK_ERR_CONFIG;
  }
  try {
    const auto p = nvlock::transitions_linear(b_nv_nt, {dt_k});
    *f_minus_hz = p.f_minus_hz;
    *f_plus_hz = p.f_plus_hz;
    return NVLK_OK;
  } catch (...) {
    return catch_all();
  }
}

nvlk_status nvlk_transitions_full(double bx_nt, double by_nt, double bz_nt, int axis_index,
                                  double dt_k, double* f_minus_hz, double* f_plus_hz) {
  set_error("");
  if (!f_minus_hz || !f_plus_hz) {
    set_error("null output pointer");
    return NVLK_ERR_CONFIG;
  }
  try {
    const auto p = nvlock::transitions_full({bx_nt, by_nt, bz_nt}, axis_index, {dt_k});
    *f_minus_hz = p.f_minus_hz;
    *f_plus_hz = p.f_plus_hz;
    return NVLK_OK;
  } catch (...) {
    return catch_all();
  }
}

nvlk_status nvlk_field_from_pair(double f_plus_hz, double f_minus_hz, double* b_nv_nt,
                                 double* dt_k) {
  set_error("");
  if (!b_nv_nt || !dt_k) {
    set_error("null output pointer");
    return NVLK_ERR_CONFIG;
  }
  try {
    const auto inv = nvlock::field_from_pair(f_plus_hz, f_minus_hz);
    *b_nv_nt = inv.b_nv_nt;
    *dt_k = inv.dt_k;
    return NVLK_OK;
  } catch (...) {
    return catch_all();
  }
}

nvlk_status nvlk_closed_loop_analysis(double g_v_per_hz, double alpha, double k_i_hz_per_v,
                                      double update_rate_hz, double* pole_magnitudes, int* stable,
                                      double* settling_time_s) {
  set_error("");
  if (!pole_magnitudes || !stable || !settling_time_s) {
    set_error("null output pointer");
    return NVLK_ERR_CONFIG;
  }
  try {
    const auto an = nvlock::closed_loop_analysis(g_v_per_hz, alpha, k_i_hz_per_v, update_rate_hz);
    pole_magnitudes[0] = std::abs(an.poles[0]);
    pole_magnitudes[1] = std::abs(an.poles[1]);
    *stable = an.stable ? 1 : 0;
    *settling_time_s = an.settling_time_s;
    return NVLK_OK;
  } catch (...) {
    return catch_all();
  }
}

}  // extern "C"
