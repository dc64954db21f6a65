// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance                 run every criterion
//   acceptance --criterion N   run criterion N only
//
// Exit status is 0 only when every selected criterion passes.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "scenarios.hpp"

using namespace csnicp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<Point3> uniform_cube(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<Point3> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  return pts;
}

// 1. Normals on a quasi-uniform sphere, curvature on a plane, under 5 s.
Outcome feature_correctness() {
  const auto t0 = Clock::now();
  const auto sphere = estimate_features(fibonacci_sphere(10000), 20);
  double worst = 0.0;
  for (std::size_t i = 0; i < sphere.size(); ++i) {
    const double c = std::abs(sphere.features()[i].normal.dot(sphere[i].normalized()));
    worst = std::max(worst, std::acos(std::min(1.0, c)));
  }
  SplitMix64 rng(2);
  std::vector<Point3> plane;
  const Point3 u = Point3(1, 2, 0.5).normalized(), v = u.cross(Point3(0.3, -1, 2)).normalized();
  for (int i = 0; i < 1000; ++i) plane.push_back(Point3(0.1, 0.2, 0.3) + rng.uniform() * u + rng.uniform() * v);
  const auto flat = estimate_features(PointCloud(plane), 20);
  double max_delta = 0.0;
  for (const auto& f : flat.features()) max_delta = std::max(max_delta, f.curvature);
  const double t = seconds_since(t0);
  return {worst < 1e-3 && max_delta < 1e-9 && t < 5.0,
          fmt("worst normal error %.3g rad (< 1e-3), max plane curvature %.3g (< 1e-9), %.2f s (< 5)", worst, max_delta, t)};
}

// 2. Spatial queries and mask scores versus brute-force scans.
Outcome oracle_equivalence() {
  const auto pts = uniform_cube(10000, 3);
  const SpatialIndex index(pts);
  SplitMix64 rng(4);
  int knn_bad = 0, radius_bad = 0;
  for (int q = 0; q < 100; ++q) {
    const Point3 c(rng.uniform(), rng.uniform(), rng.uniform());
    const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform() * 50);
    const double r = 0.02 + 0.1 * rng.uniform();
    std::vector<std::pair<double, std::size_t>> d;
    std::vector<std::size_t> within;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      d.emplace_back((pts[i] - c).squaredNorm(), i);
      if ((pts[i] - c).norm() <= r) within.push_back(i);
    }
    std::sort(d.begin(), d.end());
    std::vector<std::size_t> nearest;
    for (std::size_t i = 0; i < k; ++i) nearest.push_back(d[i].second);
    knn_bad += index.knn(c, k) != nearest;
    radius_bad += index.radius_neighbors(c, r) != within;
  }
  int mask_bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    SliceMask a(64, 64), b(64, 64);
    const double da = rng.uniform(), db = rng.uniform();
    for (auto& x : a.bits) x = rng.uniform() < da;
    for (auto& x : b.bits) x = rng.uniform() < db;
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const bool p = a.at(x, y), t = b.at(x, y);
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
        tn += !p && !t;
      }
    const auto c = confusion(a, b);
    const bool counts = c.tp == tp && c.fp == fp && c.fn == fn && c.tn == tn;
    const bool scores = iou(c) == static_cast<double>(tp) / static_cast<double>(tp + fp + fn) &&
                        dice(c) == 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    mask_bad += !(counts && scores);
  }
  return {knn_bad == 0 && radius_bad == 0 && mask_bad == 0,
          fmt("knn mismatches %d/100, radius mismatches %d/100, mask-score mismatches %d/50", knn_bad, radius_bad, mask_bad)};
}

// 3. Rigid recovery on the two-lobe phantom.
Outcome rigid_recovery() {
  int ok = 0;
  double slowest = 0.0, worst_rot = 0.0, worst_tr = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto inst = scenarios::rigid_recovery(seed);
    CsnIcpConfig cfg;
    const auto t0 = Clock::now();
    const auto rep = csn_icp(inst.source, inst.target, cfg);
    const double t = seconds_since(t0);
    const auto e = scenarios::pose_error(rep.transform(), inst.expected, inst.diameter);
    slowest = std::max(slowest, t);
    worst_rot = std::max(worst_rot, e.rotation_deg);
    worst_tr = std::max(worst_tr, e.translation_rel);
    ok += e.rotation_deg <= 1.0 && e.translation_rel <= 0.01 && t < 10.0;
  }
  return {ok >= 9, fmt("%d/10 seeds recovered (need 9); worst rotation %.3f deg, worst translation %.4f diameter, "
                       "slowest run %.2f s",
                       ok, worst_rot, worst_tr, slowest)};
}

// 4. Final RMSE ordering on partial-overlap instances.
Outcome partial_overlap_ordering() {
  int wins = 0;
  std::ostringstream ratios;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto inst = scenarios::partial_overlap(seed);
    CsnIcpConfig cfg;
    const auto a = csn_icp(inst.source, inst.target, cfg);
    const auto b = icp_classic(inst.source, inst.target, cfg);
    wins += a.final_rmse <= b.final_rmse;
    ratios << (seed > 1 ? " " : "") << fmt("%.4f", a.final_rmse / b.final_rmse);
  }
  return {wins >= 8, fmt("csn_icp RMSE <= icp_classic RMSE on %d/10 seeds (need 8); ratios csn/icp: ", wins) + ratios.str()};
}

// 5. Zero feature weights and disabled rejection reproduce classic ICP.
Outcome degenerate_reduction() {
  int equal = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = scenarios::perturbed_two_lobe(3000, seed, 20.0, 0.005, seed % 2 ? 1.0 : 0.7);
    CsnIcpConfig cfg;
    cfg.feature_weights = {0.0, 0.0, 0.0};
    cfg.dc_reject_multiplier = cfg.ds_reject_multiplier = std::numeric_limits<double>::infinity();
    cfg.record_correspondences = true;
    const auto a = csn_icp(inst.source, inst.target, cfg);
    const auto b = icp_classic(inst.source, inst.target, cfg);
    equal += !a.correspondence_trace.empty() && a.correspondence_trace == b.correspondence_trace;
  }
  return {equal == 5, fmt("identical per-iteration correspondence sets on %d/5 instances", equal)};
}

// 6. Partition registration of independently moved lobes.
Outcome partition_registration() {
  int ok = 0;
  std::ostringstream log;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = scenarios::articulated_two_lobe(seed);
    CsnIcpConfig cfg;
    cfg.partitions = 2;
    const auto two = partition_register(inst.source, inst.target, cfg);
    cfg.partitions = 1;
    const auto one = partition_register(inst.source, inst.target, cfg);
    const auto l = scenarios::pose_error(two.final_transforms[0], inst.expected_left, inst.diameter);
    const auto r = scenarios::pose_error(two.final_transforms[1], inst.expected_right, inst.diameter);
    const bool good = l.rotation_deg <= 1.0 && r.rotation_deg <= 1.0 && l.translation_rel <= 0.01 &&
                      r.translation_rel <= 0.01 && two.final_rmse < one.final_rmse;
    ok += good;
    log << fmt(" [seed %d: rot %.3f/%.3f deg, rmse %.5f vs %.5f]", static_cast<int>(seed), l.rotation_deg,
               r.rotation_deg, two.final_rmse, one.final_rmse);
  }
  return {ok == 5, fmt("%d/5 seeds pass", ok) + log.str()};
}

// Runs the CLI, returns its exit status.
int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + CSNICP_CLI + "\" " + args + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("csnicp_acceptance_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// 7. Voxelized stacks with fine CT and coarse MR slice spacing, through the CLI.
Outcome slice_pipeline() {
  ScratchDir dir("pipeline");
  int ok = 0;
  std::ostringstream log;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto d = dir.path / std::to_string(seed);
    fs::create_directories(d);
    write_json_file(d / "phantom.json",
                    {{"shape", "ellipsoid"}, {"point_count", 60000}, {"seed", seed}, {"semi_axes", {0.7, 1.0, 0.6}}});
    write_json_file(d / "perturbation.json", {{"rotation_axis", {0, 1, 0}},
                                              {"rotation_angle", 5.0 * scenarios::kDeg},
                                              {"translation", {0.05, -0.03, 0.04}},
                                              {"seed", seed}});
    bool ran = cli("synth --stacks --pixel-pitch 0.025 --ct-spacing 1.25 --mr-spacing 5 --phantom " +
                   q(d / "phantom.json") + " --perturbation " + q(d / "perturbation.json") + " --out " + q(d / "s")) == 0;
    ran = ran && cli("build-cloud --ct " + q(d / "s" / "ct_stack" / "manifest.json") + " --mr " +
                     q(d / "s" / "mr_stack" / "manifest.json") + " --out " + q(d / "c")) == 0;
    ran = ran && cli("register --partitions 1 --source " + q(d / "c" / "mr_cloud.xyz") + " --target " +
                     q(d / "c" / "ct_cloud.xyz") + " --out " + q(d / "r")) == 0;
    if (!ran) {
      log << fmt(" [seed %d: command failed]", static_cast<int>(seed));
      continue;
    }
    const double voxel = read_json_file(d / "c" / "build_report.json").at("voxel_pitch").get<double>();
    ran = cli("evaluate --pitch " + fmt("%.17g", voxel) + " --registered " + q(d / "r" / "registered.xyz") +
              " --target " + q(d / "c" / "ct_cloud.xyz") + " --out " + q(d / "e")) == 0;
    if (!ran) {
      log << fmt(" [seed %d: evaluate failed]", static_cast<int>(seed));
      continue;
    }
    const auto report = read_json_file(d / "r" / "report.json");
    const auto overlap = read_json_file(d / "e" / "overlap.json");
    const double rmse_pitches = report.at("final_rmse").get<double>() / voxel;
    const double dmr = overlap.at("d_mr").get<double>(), dct = overlap.at("d_ct").get<double>();
    const auto slices = overlap.at("slices_used").get<std::size_t>();
    ok += rmse_pitches <= 2.0 && dmr <= 0.1 && dct <= 0.1 && slices > 0;
    log << fmt(" [seed %d: RMSE %.2f voxel pitches, D_MR %.4f, D_CT %.4f over %zu slices]", static_cast<int>(seed),
               rmse_pitches, dmr, dct, slices);
  }
  return {ok == 3, fmt("%d/3 seeds pass", ok) + log.str()};
}

// 8. Rigid-transform algebra over many random transforms.
Outcome transform_algebra() {
  SplitMix64 rng(8);
  auto random_transform = [&] {
    return RigidTransform::from_axis_angle(rng.unit_vector(), std::numbers::pi * rng.uniform(),
                                           Point3(rng.normal(), rng.normal(), rng.normal()));
  };
  double ortho = 0.0, det = 0.0, iso = 0.0, assoc = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const auto a = random_transform(), b = random_transform(), c = random_transform();
    ortho = std::max(ortho, (a.rotation.transpose() * a.rotation - Eigen::Matrix3d::Identity()).norm());
    det = std::max(det, std::abs(a.rotation.determinant() - 1.0));
    const Point3 p(rng.uniform(), rng.uniform(), rng.uniform()), q(rng.uniform(), rng.uniform(), rng.uniform());
    iso = std::max(iso, std::abs((a(p) - a(q)).norm() - (p - q).norm()));
    const auto left = a.compose(b).compose(c), right = a.compose(b.compose(c));
    assoc = std::max(assoc, std::max((left.rotation - right.rotation).cwiseAbs().maxCoeff(),
                                     (left.translation - right.translation).cwiseAbs().maxCoeff()));
  }
  return {ortho < 1e-9 && det < 1e-9 && iso < 1e-10 && assoc < 1e-12,
          fmt("max |R^T R - I| %.2g, max |det - 1| %.2g, max isometry error %.2g, max associativity error %.2g", ortho,
              det, iso, assoc)};
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// 9. Every CLI command is byte-reproducible across reruns and thread counts.
Outcome determinism() {
  ScratchDir dir("determinism");
  const auto& d = dir.path;
  write_json_file(d / "phantom.json", {{"shape", "two_lobe_pelvis"}, {"point_count", 6000}, {"seed", 9}});
  write_json_file(d / "perturbation.json", {{"rotation_axis", {0.2, 0.4, 1.0}},
                                            {"rotation_angle", 0.25},
                                            {"translation", {0.04, 0.02, -0.03}},
                                            {"noise_sigma", 0.004},
                                            {"keep_fraction", 0.8},
                                            {"subsample", "slab"},
                                            {"seed", 9}});
  struct Run {
    std::string out;
    unsigned threads;
  };
  const std::vector<Run> runs{{"t1a", 1}, {"t1b", 1}, {"t4", 4}};
  int failures = 0;
  for (const auto& r : runs) {
    const auto o = d / r.out;
    const std::string th = " --threads " + std::to_string(r.threads) + " ";
    failures += cli(th + "synth --stacks --pixel-pitch 0.04 --phantom " + q(d / "phantom.json") + " --perturbation " +
                    q(d / "perturbation.json") + " --out " + q(o / "synth")) != 0;
    failures += cli(th + "build-cloud --ct " + q(o / "synth" / "ct_stack" / "manifest.json") + " --mr " +
                    q(o / "synth" / "mr_stack" / "manifest.json") + " --out " + q(o / "build")) != 0;
    failures += cli(th + "register --source " + q(o / "synth" / "perturbed.xyz") + " --target " +
                    q(o / "synth" / "phantom.xyz") + " --out " + q(o / "csn")) > 2;
    failures += cli(th + "register --algorithm icp --source " + q(o / "synth" / "perturbed.xyz") + " --target " +
                    q(o / "synth" / "phantom.xyz") + " --out " + q(o / "icp")) > 2;
    failures += cli(th + "evaluate --registered " + q(o / "csn" / "registered.xyz") + " --target " +
                    q(o / "synth" / "phantom.xyz") + " --out " + q(o / "eval")) != 0;
    failures += cli(th + "reslice --cloud " + q(o / "synth" / "phantom.xyz") +
                    " --z 0 --thickness 0.1 --pitch 0.03 --out " + q(o / "reslice" / "slice.pgm")) != 0;
  }
  std::size_t compared = 0, differing = 0;
  const auto reference = d / runs.front().out;
  for (const auto& entry : fs::recursive_directory_iterator(reference)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), reference);
    const auto ref = read_file(entry.path());
    for (std::size_t i = 1; i < runs.size(); ++i) {
      ++compared;
      const auto other = d / runs[i].out / rel;
      differing += !fs::exists(other) || read_file(other) != ref;
    }
  }
  return {failures == 0 && differing == 0 && compared > 0,
          fmt("%d command failures; %zu file comparisons across reruns and thread counts 1/1/4, %zu differ", failures,
              compared, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"feature correctness", feature_correctness},
      {"oracle equivalence", oracle_equivalence},
      {"rigid recovery", rigid_recovery},
      {"partial-overlap RMSE ordering", partial_overlap_ordering},
      {"degenerate-config reduction", degenerate_reduction},
      {"partition registration", partition_registration},
      {"end-to-end slice pipeline", slice_pipeline},
      {"transform algebra", transform_algebra},
      {"determinism", determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: acceptance [--criterion N]...\n");
      return 2;
    }
  }
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);

  bool all = true;
  for (int n : selected) {
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "no criterion %d\n", n);
      return 2;
    }
    const auto& [name, fn] = criteria[n - 1];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("criterion %d %s: %s | %s\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
