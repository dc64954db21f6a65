// csnicp: build bone point clouds from mask stacks, register them, reslice and
// evaluate, and generate synthetic phantoms.
//
// Exit codes: 0 success, 1 input or algorithm error, 2 registration stopped at
// max iterations without converging (outputs are still written).

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "csnicp/csnicp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RegisterArgs {
  std::string source, target, out;
  std::string algorithm;
  std::optional<std::size_t> partitions, k;
  std::optional<double> r_th;
  std::optional<int> max_iter;
};

double json_number_or_inf(const json& v) {
  if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "infinity"))
    return std::numeric_limits<double>::infinity();
  return v.get<double>();
}

// Defaults, then config-file values, then command-line flags.
csnicp::CsnIcpConfig resolve_config(const std::string& config_path, const RegisterArgs& args, std::string& algorithm) {
  csnicp::CsnIcpConfig cfg;
  algorithm = "csn-icp";
  if (!config_path.empty()) {
    const json j = csnicp::read_json_file(config_path);
    try {
      if (j.contains("algorithm")) algorithm = j["algorithm"].get<std::string>();
      if (j.contains("k")) cfg.k = j["k"].get<std::size_t>();
      if (j.contains("r_th")) cfg.r_th = j["r_th"].get<double>();
      if (j.contains("dc_reject_multiplier")) cfg.dc_reject_multiplier = json_number_or_inf(j["dc_reject_multiplier"]);
      if (j.contains("ds_reject_multiplier")) cfg.ds_reject_multiplier = json_number_or_inf(j["ds_reject_multiplier"]);
      if (j.contains("dc_reject_absolute")) cfg.dc_reject_absolute = j["dc_reject_absolute"].get<double>();
      if (j.contains("ds_reject_absolute")) cfg.ds_reject_absolute = j["ds_reject_absolute"].get<double>();
      if (j.contains("max_iterations")) cfg.max_iterations = j["max_iterations"].get<int>();
      if (j.contains("rmse_tolerance")) cfg.rmse_tolerance = j["rmse_tolerance"].get<double>();
      if (j.contains("partitions")) cfg.partitions = j["partitions"].get<std::size_t>();
      if (j.contains("centroid_prealign")) cfg.centroid_prealign = j["centroid_prealign"].get<bool>();
      if (j.contains("feature_weights")) {
        const auto& w = j["feature_weights"];
        cfg.feature_weights = {w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>()};
      }
    } catch (const json::exception& e) {
      throw csnicp::InvalidInputError("config " + config_path + ": " + e.what());
    }
  }
  if (!args.algorithm.empty()) algorithm = args.algorithm;
  if (args.k) cfg.k = *args.k;
  if (args.r_th) cfg.r_th = *args.r_th;
  if (args.max_iter) cfg.max_iterations = *args.max_iter;
  if (args.partitions) cfg.partitions = *args.partitions;
  if (algorithm != "csn-icp" && algorithm != "icp")
    throw csnicp::InvalidInputError("unknown algorithm '" + algorithm + "' (expected csn-icp or icp)");
  cfg.validate();
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw csnicp::IoError("cannot create output directory: " + dir);
}

int cmd_build_cloud(const std::string& ct_path, const std::string& mr_path, const std::string& out, bool full_voxel) {
  const auto ct = csnicp::load_stack(ct_path);
  const auto mr = csnicp::load_stack(mr_path);
  const double mr_extent = csnicp::max_bone_extent_y(mr);
  const double scale = csnicp::scale_factor(ct, mr);
  csnicp::BuildOptions opts;
  opts.mode = full_voxel ? csnicp::SurfaceMode::FullVoxel : csnicp::SurfaceMode::Surface;
  opts.normalizer = mr_extent;
  const auto ct_cloud = csnicp::build_point_cloud(ct, scale, opts);
  const auto mr_cloud = csnicp::build_point_cloud(mr, 1.0, opts);

  ensure_dir(out);
  csnicp::write_cloud(fs::path(out) / "ct_cloud.xyz", ct_cloud);
  csnicp::write_cloud(fs::path(out) / "mr_cloud.xyz", mr_cloud);
  csnicp::write_json_file(fs::path(out) / "build_report.json",
                          {{"ct_scale_factor", scale},
                           {"mr_max_extent_y_mm", mr_extent},
                           {"voxel_pitch", mr.manifest.pixel_spacing_mm / mr_extent},
                           {"ct_points", ct_cloud.size()},
                           {"mr_points", mr_cloud.size()},
                           {"mode", full_voxel ? "full_voxel" : "surface"}});
  std::printf("build-cloud: CT %zu points (scale %.6g), MR %zu points -> %s\n", ct_cloud.size(), scale,
              mr_cloud.size(), out.c_str());
  return 0;
}

int cmd_register(const std::string& config_path, const RegisterArgs& args) {
  std::string algorithm;
  const auto cfg = resolve_config(config_path, args, algorithm);
  const auto source = csnicp::read_cloud(args.source);
  const auto target = csnicp::read_cloud(args.target);
  const auto report = algorithm == "icp" ? csnicp::icp_classic(source, target, cfg)
                                         : csnicp::partition_register(source, target, cfg);
  ensure_dir(args.out);
  csnicp::write_json_file(fs::path(args.out) / "report.json", csnicp::to_json(report));
  csnicp::write_json_file(fs::path(args.out) / "transform.json", csnicp::to_json(report.transform()));
  csnicp::write_cloud(fs::path(args.out) / "registered.xyz", csnicp::transformed_source(source, report));
  std::printf("register (%s): %d iterations, RMSE %.6g -> %.6g, %s\n", algorithm.c_str(), report.iterations_used,
              report.initial_rmse, report.final_rmse, report.converged ? "converged" : "NOT converged");
  return report.converged ? 0 : 2;
}

int cmd_evaluate(const std::string& registered_path, const std::string& target_path, const std::string& out,
                 std::optional<double> pitch, std::optional<double> thickness, int closing) {
  const auto registered = csnicp::read_cloud(registered_path);
  const auto target = csnicp::read_cloud(target_path);
  csnicp::EvaluateOptions opts;
  opts.pitch = pitch;
  opts.thickness = thickness;
  opts.region.closing_iterations = closing;
  const auto ev = csnicp::evaluate_overlap(registered, target, opts);

  json per_slice = json::array();
  for (const auto& s : ev.slices)
    per_slice.push_back({{"z", s.z},
                         {"area_mr", s.area_mr},
                         {"area_ct", s.area_ct},
                         {"d_mr", s.d_mr},
                         {"d_ct", s.d_ct},
                         {"iou", s.iou},
                         {"dice", s.dice}});
  json j = csnicp::to_json(ev.mean);
  j["per_slice"] = per_slice;
  j["slices_used"] = ev.slices.size();
  j["skipped_slices"] = ev.skipped_slices;
  j["pitch"] = ev.pitch;
  j["thickness"] = ev.thickness;
  ensure_dir(out);
  csnicp::write_json_file(fs::path(out) / "overlap.json", j);
  std::printf("evaluate: RMSE %.6g, mean D_MR %.4f, D_CT %.4f, IOU %.4f, Dice %.4f over %zu slices\n", ev.mean.rmse,
              ev.mean.d_mr, ev.mean.d_ct, ev.mean.iou, ev.mean.dice, ev.slices.size());
  return 0;
}

struct SynthArgs {
  std::string phantom, perturbation, out;
  std::optional<std::uint64_t> seed;
  bool stacks = false;
  double pixel_pitch = 0.025;
  double ct_spacing = 1.25;  // multiples of pixel_pitch
  double mr_spacing = 5.0;
};

int cmd_synth(const SynthArgs& a) {
  auto ps = csnicp::phantom_spec_from_json(csnicp::read_json_file(a.phantom));
  auto qs = csnicp::perturbation_spec_from_json(csnicp::read_json_file(a.perturbation));
  if (a.seed) {
    ps.seed = *a.seed;
    qs.seed = *a.seed;
  }
  const auto phantom = csnicp::make_phantom(ps);
  const auto perturbed = csnicp::perturb(phantom, qs);

  ensure_dir(a.out);
  const fs::path out(a.out);
  csnicp::write_cloud(out / "phantom.xyz", phantom);
  csnicp::write_cloud(out / "perturbed.xyz", perturbed.cloud);
  csnicp::write_json_file(out / "ground_truth.json", csnicp::to_json(perturbed.ground_truth));
  json summary = {{"phantom", csnicp::to_json(ps)},
                  {"perturbation", csnicp::to_json(qs)},
                  {"phantom_points", phantom.size()},
                  {"perturbed_points", perturbed.cloud.size()}};
  if (a.stacks) {
    if (!(a.pixel_pitch > 0.0) || !(a.ct_spacing > 0.0) || !(a.mr_spacing > 0.0))
      throw csnicp::InvalidInputError("synth: stack pitches must be positive");
    csnicp::VoxelizeOptions vo;
    vo.modality = csnicp::Modality::CT;
    csnicp::write_stack(csnicp::voxelize_to_stack(phantom, a.pixel_pitch, a.ct_spacing * a.pixel_pitch, vo), out / "ct_stack");
    vo.modality = csnicp::Modality::MR;
    csnicp::write_stack(csnicp::voxelize_to_stack(perturbed.cloud, a.pixel_pitch, a.mr_spacing * a.pixel_pitch, vo),
                        out / "mr_stack");
    summary["stacks"] = {{"pixel_pitch", a.pixel_pitch},
                         {"ct_slice_spacing", a.ct_spacing * a.pixel_pitch},
                         {"mr_slice_spacing", a.mr_spacing * a.pixel_pitch}};
  }
  csnicp::write_json_file(out / "synth.json", summary);
  std::printf("synth: phantom %zu points, perturbed %zu points -> %s\n", phantom.size(), perturbed.cloud.size(),
              a.out.c_str());
  return 0;
}

struct ResliceArgs {
  std::string cloud, out;
  double z = 0.0;
  double thickness = 0.0;
  double pitch = 0.0;
  std::optional<int> width, height;
  std::optional<double> origin_x, origin_y;
  int closing = 2;
};

int cmd_reslice(const ResliceArgs& a) {
  const auto cloud = csnicp::read_cloud(a.cloud);
  if (cloud.empty()) throw csnicp::InvalidInputError("reslice: empty cloud");
  if (!(a.pitch > 0.0)) throw csnicp::InvalidInputError("reslice: --pitch must be positive");
  const auto [lo, hi] = cloud.bounds();
  const int margin = a.closing + 2;
  csnicp::ResliceGrid grid;
  grid.pitch = a.pitch;
  grid.origin_x = a.origin_x.value_or(lo.x() - margin * a.pitch);
  grid.origin_y = a.origin_y.value_or(lo.y() - margin * a.pitch);
  grid.width = a.width.value_or(static_cast<int>(std::ceil((hi.x() - grid.origin_x) / a.pitch)) + 1 + margin);
  grid.height = a.height.value_or(static_cast<int>(std::ceil((hi.y() - grid.origin_y) / a.pitch)) + 1 + margin);
  csnicp::RegionOptions region;
  region.closing_iterations = a.closing;
  const auto mask = csnicp::reslice(cloud, a.z, a.thickness, grid, region);
  const fs::path out(a.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path().string());
  csnicp::write_pgm_mask(out, mask);
  std::printf("reslice: %dx%d mask, %zu bone pixels -> %s\n", mask.width, mask.height, mask.area(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal bone point-cloud construction and CSN-ICP registration"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  unsigned threads = 1;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "Worker threads (results do not depend on this)")->check(CLI::PositiveNumber);

  std::string ct_manifest, mr_manifest, build_out;
  bool full_voxel = false;
  auto* build = app.add_subcommand("build-cloud", "Build normalized CT and MR clouds from mask stacks");
  build->add_option("--ct", ct_manifest, "CT stack manifest")->required();
  build->add_option("--mr", mr_manifest, "MR stack manifest (scale reference)")->required();
  build->add_option("--out", build_out, "Output directory")->required();
  build->add_flag("--full-voxel", full_voxel, "Emit every bone voxel instead of surface voxels");

  RegisterArgs reg;
  std::uint64_t unused_seed = 0;
  auto* regcmd = app.add_subcommand("register", "Register a source cloud onto a target cloud");
  regcmd->add_option("--source", reg.source, "Moving (MR) cloud")->required();
  regcmd->add_option("--target", reg.target, "Fixed (CT) cloud")->required();
  regcmd->add_option("--out", reg.out, "Output directory")->required();
  regcmd->add_option("--algorithm", reg.algorithm, "csn-icp or icp")->check(CLI::IsMember({"csn-icp", "icp"}));
  regcmd->add_option("--partitions", reg.partitions, "Number of source partitions (csn-icp)");
  regcmd->add_option("--k", reg.k, "Neighborhood size for features");
  regcmd->add_option("--r-th", reg.r_th, "Refinement radius");
  regcmd->add_option("--max-iter", reg.max_iter, "Iteration limit");
  regcmd->add_option("--seed", unused_seed, "Accepted for interface symmetry; registration is deterministic");

  std::string ev_registered, ev_target, ev_out;
  std::optional<double> ev_pitch, ev_thickness;
  int ev_closing = 2;
  auto* evalcmd = app.add_subcommand("evaluate", "RMSE and slice overlap of a registered cloud against a target");
  evalcmd->add_option("--registered", ev_registered, "Registered (MR) cloud")->required();
  evalcmd->add_option("--target", ev_target, "Target (CT) cloud")->required();
  evalcmd->add_option("--out", ev_out, "Output directory")->required();
  evalcmd->add_option("--pitch", ev_pitch, "Raster pitch (default: target median spacing)");
  evalcmd->add_option("--slice-thickness", ev_thickness, "Slab thickness and slice step (default: 2 x pitch)");
  evalcmd->add_option("--closing", ev_closing, "Closing iterations")->check(CLI::NonNegativeNumber);

  SynthArgs syn;
  auto* syncmd = app.add_subcommand("synth", "Generate a phantom, its perturbed copy and ground truth");
  syncmd->add_option("--phantom", syn.phantom, "Phantom spec (JSON)")->required();
  syncmd->add_option("--perturbation", syn.perturbation, "Perturbation spec (JSON)")->required();
  syncmd->add_option("--out", syn.out, "Output directory")->required();
  syncmd->add_option("--seed", syn.seed, "Overrides both spec seeds");
  syncmd->add_flag("--stacks", syn.stacks, "Also write voxelized CT and MR mask stacks");
  syncmd->add_option("--pixel-pitch", syn.pixel_pitch, "Stack pixel pitch");
  syncmd->add_option("--ct-spacing", syn.ct_spacing, "CT slice spacing in pixel pitches");
  syncmd->add_option("--mr-spacing", syn.mr_spacing, "MR slice spacing in pixel pitches");

  ResliceArgs rs;
  auto* rscmd = app.add_subcommand("reslice", "Extract a region mask from a cloud at a z band");
  rscmd->add_option("--cloud", rs.cloud, "Input cloud")->required();
  rscmd->add_option("--out", rs.out, "Output PGM path")->required();
  rscmd->add_option("--z", rs.z, "Band center")->required();
  rscmd->add_option("--thickness", rs.thickness, "Band thickness")->required();
  rscmd->add_option("--pitch", rs.pitch, "Pixel pitch")->required();
  rscmd->add_option("--width", rs.width, "Grid width in pixels");
  rscmd->add_option("--height", rs.height, "Grid height in pixels");
  rscmd->add_option("--origin-x", rs.origin_x, "x of pixel column 0");
  rscmd->add_option("--origin-y", rs.origin_y, "y of pixel row 0");
  rscmd->add_option("--closing", rs.closing, "Closing iterations")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  csnicp::set_thread_count(threads);
  try {
    if (*build) return cmd_build_cloud(ct_manifest, mr_manifest, build_out, full_voxel);
    if (*regcmd) return cmd_register(config_path, reg);
    if (*evalcmd) return cmd_evaluate(ev_registered, ev_target, ev_out, ev_pitch, ev_thickness, ev_closing);
    if (*syncmd) return cmd_synth(syn);
    if (*rscmd) return cmd_reslice(rs);
  } catch (const csnicp::DegenerateGeometryError& e) {
    std::cerr << "error: degenerate geometry: " << e.what() << '\n';
    return 1;
  } catch (const csnicp::DivergenceError& e) {
    std::cerr << "error: divergence: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
