#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "vigil/evaluation.hpp"
#include "vigil/geometry.hpp"
#include "vigil/scenario.hpp"

namespace {

int cmd_run(const std::string& scenario_path, const std::string& out_dir,
            std::int64_t seed_override, const std::string& rates_override, bool dump_masks) {
  auto cfg = vigil::scenario::load(scenario_path);
  if (seed_override >= 0) cfg.master_seed = static_cast<std::uint64_t>(seed_override);
  if (!rates_override.empty()) vigil::scenario::apply_rates_preset(cfg, rates_override);

  vigil::scenario::RunOptions opt;
  if (dump_masks) opt.mask_dump_dir = out_dir + "/masks";

  const auto result = vigil::scenario::run(cfg, opt);
  vigil::eval::run_report(out_dir, result.artifacts);

  const auto& bw = result.artifacts.bandwidth;
  std::printf("wrote %s: %.1f s virtual, %zu cameras, %zu commands, reduction %.2f%%",
              out_dir.c_str(), vigil::to_sec(result.artifacts.duration), cfg.cameras.size(),
              result.artifacts.commands.size(), 100.0 * bw.reduction);
  if (result.artifacts.mot) {
    std::printf(", MOTA %.1f MOTP %.1f", result.artifacts.mot->mota, result.artifacts.mot->motp);
  }
  std::printf("\n");
  return 0;
}

int cmd_calibrate(const std::string& corr_path, const std::string& out_path, double max_rmse) {
  const auto pairs = vigil::geometry::load_correspondences(corr_path);
  const auto h = vigil::geometry::estimate_homography(pairs);
  const double rmse = vigil::geometry::reprojection_rmse(h, pairs);
  if (rmse > max_rmse) {
    std::cerr << "calibration rejected: reprojection RMSE " << rmse << " m exceeds the "
              << max_rmse << " m bound\n";
    return 2;
  }
  vigil::geometry::save_homography(out_path, h);
  std::printf("wrote %s (%zu correspondences, RMSE %.6g m)\n", out_path.c_str(), pairs.size(),
              rmse);
  return 0;
}

int cmd_mot(const std::string& gt_path, const std::string& hyp_path) {
  const auto gt = vigil::eval::load_gt_csv(gt_path);
  const auto hyp = vigil::eval::load_hyp_csv(hyp_path);
  const auto report = vigil::eval::compute_mot(gt, hyp, 1.0);
  vigil::eval::write_metrics_csv(std::cout, report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reconfigurable edge-cloud surveillance simulator"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir, rates;
  std::int64_t seed = -1;
  bool dump_masks = false;
  auto* run = app.add_subcommand("run", "simulate a scenario and write the report bundle");
  run->add_option("scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--out", out_dir, "output bundle directory")->required();
  run->add_option("--seed", seed, "override the scenario master seed");
  run->add_option("--rates", rates, "rates preset override (table2 or fig6)");
  run->add_flag("--dump-masks", dump_masks, "write per-frame foreground masks");

  std::string corr_path, h_out;
  double max_rmse = 0.25;
  auto* calibrate =
      app.add_subcommand("calibrate", "estimate a ground-plane homography from point pairs");
  calibrate->add_option("correspondences", corr_path, "img_x img_y world_x world_y per line")
      ->required();
  calibrate->add_option("--out", h_out, "output homography file")->required();
  calibrate->add_option("--max-rmse", max_rmse, "reject calibrations above this RMSE (m)");

  std::string gt_path, hyp_path;
  auto* mot = app.add_subcommand("mot", "score tracker output against ground truth");
  mot->add_option("gt", gt_path, "ground truth CSV (timestamp_ms,id,x,y)")->required();
  mot->add_option("hyp", hyp_path, "hypothesis CSV (timestamp_ms,id,x,y)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario_path, out_dir, seed, rates, dump_masks);
    if (calibrate->parsed()) return cmd_calibrate(corr_path, h_out, max_rmse);
    if (mot->parsed()) return cmd_mot(gt_path, hyp_path);
  } catch (const vigil::scenario::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const vigil::scenario::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
