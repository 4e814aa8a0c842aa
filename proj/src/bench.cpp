#include "voxgrasp/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "voxgrasp/error.hpp"

namespace voxgrasp {

using nlohmann::json;

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::blocks_pile: return "blocks-pile";
    case Scenario::pile: return "pile";
    case Scenario::packed: return "packed";
  }
  return "?";
}

const char* to_string(Policy p) {
  switch (p) {
    case Policy::random_above_eps: return "random_above_eps";
    case Policy::max_quality: return "max_quality";
    case Policy::highest_z: return "highest_z";
  }
  return "?";
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::cleared: return "cleared";
    case Termination::no_grasp: return "no_grasp";
    case Termination::two_failures: return "two_failures";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "blocks" || s == "blocks-pile") return Scenario::blocks_pile;
  if (s == "pile") return Scenario::pile;
  if (s == "packed") return Scenario::packed;
  throw InputError("unknown scenario '" + s + "' (expected blocks, pile or packed)");
}

Policy policy_from_string(const std::string& s) {
  for (Policy p : {Policy::random_above_eps, Policy::max_quality, Policy::highest_z})
    if (s == to_string(p)) return p;
  throw InputError("unknown policy '" + s + "'");
}

std::vector<ViewpointSample> benchmark_views(const GridFrame& frame, double support_z) {
  const double radius = frame.length / 2.0, height = 0.5;
  Vec3 target = frame.table_center_world();
  target.z() = support_z;
  std::vector<ViewpointSample> views;
  for (int k = 0; k < 6; ++k) {
    ViewpointSample v;
    v.target = target;
    v.r = std::hypot(radius, height);
    v.theta = std::atan2(radius, height);
    v.phi = k * std::numbers::pi / 3.0;
    views.push_back(v);
  }
  return views;
}

std::optional<std::size_t> select_policy(const std::vector<Detection>& detections, Policy policy, Rng& rng) {
  if (detections.empty()) return std::nullopt;
  switch (policy) {
    case Policy::random_above_eps:
      return static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(detections.size()) - 1));
    case Policy::max_quality: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < detections.size(); ++i)
        if (detections[i].quality > detections[best].quality) best = i;
      return best;
    }
    case Policy::highest_z: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < detections.size(); ++i)
        if (detections[i].grasp.pose.translation.z() > detections[best].grasp.pose.translation.z()) best = i;
      return best;
    }
  }
  return std::nullopt;
}

void BenchConfig::validate() const {
  if (m < 0) throw InputError("m must be >= 0");
  if (rounds < 1) throw InputError("rounds must be >= 1");
  detection.validate();
  oracle.gripper.validate();
}

std::vector<PrimitiveSpec> benchmark_pool(const BenchConfig& config, std::uint64_t seed) {
  return make_object_pool(config.scenario == Scenario::blocks_pile ? PoolSplit::blocks : PoolSplit::test,
                          config.pool_size, seed);
}

RoundResult run_round(const SceneDescription& description, const Planner& planner, const BenchConfig& config,
                      Rng& rng) {
  RoundResult r;
  r.scenario = config.scenario;
  r.m = config.m;
  Scene scene(description);
  r.objects_initial = static_cast<int>(scene.object_count());
  const auto views = benchmark_views(config.frame, scene.support_z());
  int failures = 0;
  while (true) {
    if (scene.object_count() == 0) {
      r.termination = Termination::cleared;
      break;
    }
    std::vector<DepthImage> images;
    for (const auto& v : views) images.push_back(render_depth(scene, v.camera_pose(), config.camera));
    const TsdfVolume volume = fuse(config.frame, images, config.truncation);
    const PlanResult plan = planner(volume);
    const auto pick = select_policy(plan.detections, config.policy, rng);
    if (!pick) {
      r.termination = Termination::no_grasp;
      break;
    }
    Attempt a;
    a.detection = plan.detections[*pick];
    a.planning_ms = plan.planning_ms;
    const GraspOutcome out =
        evaluate_grasp(scene, a.detection.grasp.pose, config.oracle.gripper.max_width, config.oracle);
    a.outcome = out.label;
    r.attempts.push_back(a);
    if (out.label == GraspLabel::success) {
      scene.remove_object(out.object);
      ++r.objects_removed;
      failures = 0;
    } else if (++failures == 2) {
      r.termination = Termination::two_failures;
      break;
    }
  }
  return r;
}

RoundResult run_round(const Planner& planner, const BenchConfig& config, const std::vector<PrimitiveSpec>& pool,
                      std::uint64_t seed, std::size_t round) {
  Rng rng = substream(seed, "round", round);
  const SceneDescription scene = config.scenario == Scenario::packed
                                     ? generate_packed(rng, pool, config.frame.length, {}, config.m)
                                     : generate_pile(rng, pool, config.frame.length, {}, config.m);
  RoundResult r = run_round(scene, planner, config, rng);
  r.round = round;
  return r;
}

std::vector<RoundResult> run_benchmark(const nn::VgnModel<float>& model, const BenchConfig& config,
                                       std::uint64_t seed) {
  config.validate();
  const auto pool = benchmark_pool(config, seed);
  const double max_width = config.oracle.gripper.max_width;
  const Planner planner = [&](const TsdfVolume& v) { return plan(v, model, config.detection, max_width); };
  std::vector<RoundResult> results(static_cast<std::size_t>(config.rounds));
  const long long count = config.rounds;
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i)
    results[static_cast<std::size_t>(i)] = run_round(planner, config, pool, seed, static_cast<std::size_t>(i));
  return results;
}

namespace {

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

BenchmarkReport aggregate(const std::vector<RoundResult>& rounds, const BenchConfig& config) {
  if (rounds.empty()) throw InputError("cannot aggregate zero rounds");
  std::vector<const RoundResult*> sorted;
  for (const auto& r : rounds) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->round < b->round; });

  BenchmarkReport rep;
  rep.scenario = config.scenario;
  rep.m = config.m;
  rep.epsilon = config.detection.epsilon;
  rep.policy = config.policy;
  rep.rounds = rounds.size();
  std::size_t initial = 0, removed = 0;
  std::vector<double> times;
  for (const RoundResult* r : sorted) {
    initial += r->objects_initial;
    removed += r->objects_removed;
    for (const auto& a : r->attempts) {
      ++rep.attempts;
      if (a.outcome == GraspLabel::success) ++rep.successes;
      times.push_back(a.planning_ms);
    }
  }
  if (rep.attempts > 0) {
    const double n = static_cast<double>(rep.attempts), p = rep.successes / n, z = 1.959963984540054;
    rep.success_rate = 100.0 * p;
    const double denom = 1.0 + z * z / n;
    const double centre = (p + z * z / (2 * n)) / denom;
    const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
    rep.success_ci_low = 100.0 * std::max(0.0, centre - half);
    rep.success_ci_high = 100.0 * std::min(1.0, centre + half);
  }
  rep.percent_cleared = initial ? 100.0 * static_cast<double>(removed) / static_cast<double>(initial) : 100.0;
  if (!times.empty()) {
    double sum = 0.0;
    for (double t : times) sum += t;
    rep.mean_planning_ms = sum / static_cast<double>(times.size());
  }
  rep.p50_planning_ms = percentile(times, 50.0);
  rep.p99_planning_ms = percentile(times, 99.0);
  return rep;
}

std::string round_to_json(const RoundResult& r) {
  json attempts = json::array();
  for (const auto& a : r.attempts) {
    const auto& g = a.detection.grasp;
    attempts.push_back({
        {"t", {g.pose.translation.x(), g.pose.translation.y(), g.pose.translation.z()}},
        {"r", {g.pose.rotation.w(), g.pose.rotation.x(), g.pose.rotation.y(), g.pose.rotation.z()}},
        {"width_m", g.width},
        {"quality", a.detection.quality},
        {"outcome", to_string(a.outcome)},
        {"planning_ms", a.planning_ms},
    });
  }
  json j = {{"round", r.round},
            {"scenario", to_string(r.scenario)},
            {"m", r.m},
            {"objects_initial", r.objects_initial},
            {"objects_removed", r.objects_removed},
            {"termination", to_string(r.termination)},
            {"attempts", attempts}};
  return j.dump();
}

std::string report_to_json(const BenchmarkReport& r) {
  json j = {{"scenario", to_string(r.scenario)},
            {"m", r.m},
            {"epsilon", r.epsilon},
            {"policy", to_string(r.policy)},
            {"rounds", r.rounds},
            {"attempts", r.attempts},
            {"successes", r.successes},
            {"success_rate", r.success_rate},
            {"success_rate_ci95", {r.success_ci_low, r.success_ci_high}},
            {"percent_cleared", r.percent_cleared},
            {"mean_planning_ms", r.mean_planning_ms},
            {"p50_planning_ms", r.p50_planning_ms},
            {"p99_planning_ms", r.p99_planning_ms},
            {"config_hash", r.config_hash}};
  return j.dump(2);
}

std::string reports_to_csv(const std::vector<BenchmarkReport>& reports) {
  std::string out = "scenario,m,epsilon,policy,success_rate,percent_cleared,mean_planning_ms,p99_planning_ms,rounds\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.2f,%s,%.2f,%.2f,%.3f,%.3f,%zu\n", to_string(r.scenario), r.m, r.epsilon,
                  to_string(r.policy), r.success_rate, r.percent_cleared, r.mean_planning_ms, r.p99_planning_ms,
                  r.rounds);
    out += buf;
  }
  return out;
}

std::string reports_to_svg(const std::vector<BenchmarkReport>& reports) {
  const int group = 90, bar = 30, top = 30, height = 200, left = 50;
  const int width = left + group * static_cast<int>(std::max<std::size_t>(reports.size(), 1)) + 20;
  std::string s;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"10\">\n",
                width, top + height + 60);
  s += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n"
                "<text x=\"4\" y=\"%d\">100%%</text><text x=\"4\" y=\"%d\">0%%</text>\n",
                left, top + height, width - 10, top + height, top + 4, top + height);
  s += buf;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const int x = left + 10 + static_cast<int>(i) * group;
    const double hs = r.success_rate / 100.0 * height, hc = r.percent_cleared / 100.0 * height;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%d\" y=\"%.1f\" width=\"%d\" height=\"%.1f\" fill=\"#4477aa\"/>\n"
                  "<rect x=\"%d\" y=\"%.1f\" width=\"%d\" height=\"%.1f\" fill=\"#ee6677\"/>\n"
                  "<text x=\"%d\" y=\"%d\">%s m=%d</text><text x=\"%d\" y=\"%d\">eps=%.2f</text>\n",
                  x, top + height - hs, bar, hs, x + bar, top + height - hc, bar, hc, x, top + height + 14,
                  to_string(r.scenario), r.m, x, top + height + 26, r.epsilon);
    s += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%d\" y=\"8\" width=\"10\" height=\"10\" fill=\"#4477aa\"/><text x=\"%d\" y=\"17\">success "
                "rate</text>\n<rect x=\"%d\" y=\"8\" width=\"10\" height=\"10\" fill=\"#ee6677\"/><text x=\"%d\" "
                "y=\"17\">cleared</text>\n</svg>\n",
                left, left + 14, left + 100, left + 114);
  s += buf;
  return s;
}

}  // namespace voxgrasp
