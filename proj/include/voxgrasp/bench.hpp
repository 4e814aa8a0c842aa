#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voxgrasp/detect.hpp"
#include "voxgrasp/oracle.hpp"
#include "voxgrasp/scene.hpp"

namespace voxgrasp {

enum class Scenario { blocks_pile, pile, packed };
enum class Policy { random_above_eps, max_quality, highest_z };
enum class Termination { cleared, no_grasp, two_failures };

const char* to_string(Scenario s);
const char* to_string(Policy p);
const char* to_string(Termination t);
/// Accepts "blocks", "blocks-pile", "pile", "packed".
Scenario scenario_from_string(const std::string& s);
Policy policy_from_string(const std::string& s);

/// Six cameras on a horizontal circle of radius length/2, 0.5 m above the
/// support plane, at azimuths k * 60 degrees, looking at the table center.
std::vector<ViewpointSample> benchmark_views(const GridFrame& frame, double support_z = 0.0);

/// Index of the chosen detection; nullopt for an empty list.
std::optional<std::size_t> select_policy(const std::vector<Detection>& detections, Policy policy, Rng& rng);

struct Attempt {
  Detection detection;
  GraspLabel outcome = GraspLabel::no_contact;
  double planning_ms = 0.0;
};

struct RoundResult {
  std::size_t round = 0;
  Scenario scenario = Scenario::blocks_pile;
  int m = 0;
  std::vector<Attempt> attempts;
  int objects_initial = 0;
  int objects_removed = 0;
  Termination termination = Termination::cleared;
};

struct BenchConfig {
  Scenario scenario = Scenario::blocks_pile;
  int m = 5;
  int rounds = 50;
  Policy policy = Policy::random_above_eps;
  DetectionConfig detection;
  OracleConfig oracle;
  GridFrame frame;
  double truncation = 0.0;
  CameraIntrinsics camera;
  std::size_t pool_size = 100;

  void validate() const;
};

/// Grasp planner seen by the benchmark loop.
using Planner = std::function<PlanResult(const TsdfVolume&)>;

/// Object pool the scenario draws from (test split, or boxes for blocks).
std::vector<PrimitiveSpec> benchmark_pool(const BenchConfig& config, std::uint64_t seed);

/// Clutter removal on one scene: fuse the six views, plan, pick a grasp,
/// execute it with the oracle and remove the object on success, until the
/// scene is cleared, no grasp is found, or two attempts in a row fail.
RoundResult run_round(const SceneDescription& scene, const Planner& planner, const BenchConfig& config,
                      Rng& rng);
/// Generates the scene for `round` from its own substream and runs it.
RoundResult run_round(const Planner& planner, const BenchConfig& config, const std::vector<PrimitiveSpec>& pool,
                      std::uint64_t seed, std::size_t round);

/// Rounds 0..config.rounds-1, in parallel; results sorted by round.
std::vector<RoundResult> run_benchmark(const nn::VgnModel<float>& model, const BenchConfig& config,
                                       std::uint64_t seed);

struct BenchmarkReport {
  Scenario scenario = Scenario::blocks_pile;
  int m = 0;
  double epsilon = 0.0;
  Policy policy = Policy::random_above_eps;
  std::size_t rounds = 0;
  std::size_t attempts = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;     // percent
  double success_ci_low = 0.0;   // 95% Wilson interval, percent
  double success_ci_high = 0.0;
  double percent_cleared = 0.0;
  double mean_planning_ms = 0.0;
  double p50_planning_ms = 0.0;
  double p99_planning_ms = 0.0;
  std::string config_hash;
};

/// Throws InputError for an empty round list.
BenchmarkReport aggregate(const std::vector<RoundResult>& rounds, const BenchConfig& config);

std::string round_to_json(const RoundResult& round);
std::string report_to_json(const BenchmarkReport& report);
std::string reports_to_csv(const std::vector<BenchmarkReport>& reports);
/// Grouped bar chart: success rate and percent cleared per report.
std::string reports_to_svg(const std::vector<BenchmarkReport>& reports);

}  // namespace voxgrasp
