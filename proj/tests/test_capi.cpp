#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "nvlock.h"

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nvlock_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("version string") {
  const char* v = nvlk_version();
  REQUIRE(v != nullptr);
  CHECK(std::strstr(v, "nvlock") != nullptr);
}

TEST_CASE("config handle lifecycle and error reporting") {
  nvlk_config* cfg = nvlk_config_default();
  REQUIRE(cfg != nullptr);
  CHECK(nvlk_config_set_seed(cfg, 9) == NVLK_OK);
  CHECK(nvlk_config_set_quiet(cfg, 1) == NVLK_OK);
  CHECK(nvlk_config_set_out_dir(cfg, "/tmp/nvlock_capi_unused") == NVLK_OK);
  CHECK(nvlk_config_set_seed(nullptr, 9) == NVLK_ERR_CONFIG);
  CHECK(nvlk_config_set_out_dir(cfg, nullptr) == NVLK_ERR_CONFIG);
  nvlk_config_free(cfg);
  nvlk_config_free(nullptr);  // must be a no-op

  CHECK(nvlk_config_load("/nonexistent/cfg.json") == nullptr);
  CHECK(std::strlen(nvlk_last_error()) > 0);

  const fs::path bad = fs::temp_directory_path() / "nvlock_capi_bad.json";
  std::ofstream(bad) << "{\"bogus\": 1}";
  CHECK(nvlk_config_load(bad.string().c_str()) == nullptr);
  CHECK(std::strstr(nvlk_last_error(), "bogus") != nullptr);
}

TEST_CASE("numeric helpers agree with the model conventions") {
  double fm = 0.0, fp = 0.0;
  REQUIRE(nvlk_transitions_linear(0.0, 0.0, &fm, &fp) == NVLK_OK);
  CHECK(fm == 2.87e9);
  CHECK(fp == 2.87e9);
  REQUIRE(nvlk_transitions_linear(1e6, 0.5, &fm, &fp) == NVLK_OK);
  CHECK(fp - fm == doctest::Approx(2.0 * 28.0 * 1e6));

  double b = 0.0, dt = 0.0;
  REQUIRE(nvlk_field_from_pair(fp, fm, &b, &dt) == NVLK_OK);
  CHECK(b == doctest::Approx(1e6).epsilon(1e-10));
  CHECK(dt == doctest::Approx(0.5).epsilon(1e-9));

  // full model on axis 0 with the field along that axis matches linear
  const double s = 2e6 / std::sqrt(3.0);
  double fm_full = 0.0, fp_full = 0.0;
  REQUIRE(nvlk_transitions_full(s, s, s, 0, 0.0, &fm_full, &fp_full) == NVLK_OK);
  REQUIRE(nvlk_transitions_linear(2e6, 0.0, &fm, &fp) == NVLK_OK);
  CHECK(fm_full == doctest::Approx(fm).epsilon(1e-10));
  CHECK(fp_full == doctest::Approx(fp).epsilon(1e-10));

  CHECK(nvlk_transitions_linear(0.0, 0.0, nullptr, &fp) == NVLK_ERR_CONFIG);
  CHECK(nvlk_transitions_full(3e7, 0.0, 0.0, 0, 0.0, &fm, &fp) == NVLK_ERR_CONFIG);
  CHECK(nvlk_transitions_full(0.0, 0.0, 0.0, 7, 0.0, &fm, &fp) == NVLK_ERR_CONFIG);
}

TEST_CASE("closed loop analysis export") {
  double mags[2] = {0.0, 0.0};
  int stable = 0;
  double settle = 0.0;
  REQUIRE(nvlk_closed_loop_analysis(2.56e-8, 0.47, 7.8e6, 1818.0, mags, &stable, &settle) ==
          NVLK_OK);
  CHECK(stable == 1);
  CHECK(mags[0] < 1.0);
  CHECK(mags[1] < 1.0);
  CHECK(settle > 0.0);
  CHECK(nvlk_closed_loop_analysis(2.56e-8, 1.5, 7.8e6, 1818.0, mags, &stable, &settle) ==
        NVLK_ERR_CONFIG);
  CHECK(std::strlen(nvlk_last_error()) > 0);
}

TEST_CASE("scenario run and manifest verification through the C API") {
  nvlk_config* cfg = nvlk_config_default();
  REQUIRE(cfg != nullptr);
  const fs::path dir = temp_dir("run");
  REQUIRE(nvlk_config_set_out_dir(cfg, dir.string().c_str()) == NVLK_OK);
  REQUIRE(nvlk_config_set_quiet(cfg, 1) == NVLK_OK);
  REQUIRE(nvlk_config_set_seed(cfg, 3) == NVLK_OK);

  CHECK(nvlk_run_scenario(cfg, "step") == NVLK_OK);
  CHECK(fs::exists(dir / "manifest.txt"));
  CHECK(nvlk_verify_manifest(dir.string().c_str()) == NVLK_OK);

  CHECK(nvlk_run_scenario(cfg, "warp") == NVLK_ERR_CONFIG);
  CHECK(std::strstr(nvlk_last_error(), "unknown scenario") != nullptr);
  CHECK(nvlk_run_scenario(nullptr, "step") == NVLK_ERR_CONFIG);
  CHECK(nvlk_run_scenario(cfg, nullptr) == NVLK_ERR_CONFIG);

  std::ofstream(dir / "step_summary.csv", std::ios::app) << "tamper\n";
  CHECK(nvlk_verify_manifest(dir.string().c_str()) == NVLK_ERR_PROPERTY);
  CHECK(nvlk_verify_manifest(nullptr) == NVLK_ERR_CONFIG);
  nvlk_config_free(cfg);
}
