// voxgrasp command-line driver: gen-data, train, detect, bench, stats.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "voxgrasp/bench.hpp"
#include "voxgrasp/config.hpp"
#include "voxgrasp/dataset.hpp"
#include "voxgrasp/detect.hpp"
#include "voxgrasp/error.hpp"
#include "voxgrasp/io.hpp"
#include "voxgrasp/neural.hpp"

namespace fs = std::filesystem;
using namespace voxgrasp;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file (config_version 1)");
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--jobs", c.jobs, "Worker threads (default: $VOXGRASP_JOBS, else all cores)");
}

Config load(const Common& c) {
  Config cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void set_jobs(int jobs) {
  if (jobs <= 0) {
    if (const char* env = std::getenv("VOXGRASP_JOBS")) {
      try {
        jobs = std::stoi(env);
      } catch (const std::exception&) {
        throw InputError("VOXGRASP_JOBS must be an integer");
      }
    }
  }
  if (jobs > 0) omp_set_num_threads(jobs);
}

template <class T>
void apply(const std::optional<T>& flag, T& dst) {
  if (flag) dst = *flag;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  Common common;
  std::string out;
  std::optional<std::uint64_t> scenes;
  std::optional<std::size_t> points;
  std::optional<double> pile_fraction;
};

int gen_data(const GenArgs& a) {
  Config cfg = load(a.common);
  apply(a.scenes, cfg.scenes);
  apply(a.points, cfg.points_per_scene);
  apply(a.pile_fraction, cfg.pile_fraction);
  cfg.validate();
  set_jobs(a.common.jobs);

  const DatasetPaths paths{a.out};
  fs::create_directories(paths.root / "volumes");
  fs::create_directories(paths.root / "scenes");
  const DatasetConfig dcfg = cfg.dataset_config();
  const auto t0 = std::chrono::steady_clock::now();
  std::uint64_t done = 0;
  DatasetBuild build = build_dataset(cfg.seed, cfg.scenes, dcfg, [&](const SceneSample& s) {
    if (!s.records.empty()) {
      write_tsdf(paths.volume(s.scene_id), s.volume);
      io::write_file_atomic(paths.scene(s.scene_id), scene_to_json(s.scene));
    }
    if (++done % 100 == 0) std::fprintf(stderr, "  %llu / %llu scenes\n", (unsigned long long)done,
                                        (unsigned long long)cfg.scenes);
  });
  build.manifest.config_hash = config_hash(cfg);
  write_records(paths.records(), build.records);
  io::write_file_atomic(paths.manifest(), manifest_to_json(build.manifest));

  std::array<std::uint64_t, 18> bins{};
  if (build.manifest.positives > 0) bins = grasp_angle_histogram(build.records, cfg.frame);
  std::string csv = "bin_start_deg,bin_end_deg,count\n";
  for (int b = 0; b < 18; ++b) csv += std::to_string(10 * b) + "," + std::to_string(10 * b + 10) + "," + std::to_string(bins[b]) + "\n";
  io::write_file_atomic(paths.histogram(), csv);

  const auto& m = build.manifest;
  std::printf("scenes %llu (skipped %llu), records %llu: %llu positive, %llu negative, %.1f s\n",
              (unsigned long long)m.scenes, (unsigned long long)m.skipped_scenes, (unsigned long long)m.count,
              (unsigned long long)m.positives, (unsigned long long)m.negatives, seconds_since(t0));
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string dataset, out, resume, loss_csv;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr;
  bool no_augment = false;
};

std::string loss_row(int epoch, const char* split, const nn::LossBreakdown& b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g,%.9g,%.9g,%.6f\n", epoch, split, b.total, b.quality, b.rotation,
                b.width, b.count ? double(b.correct) / double(b.count) : 0.0);
  return buf;
}

int train_cmd(const TrainArgs& a) {
  Config cfg = load(a.common);
  apply(a.epochs, cfg.train.epochs);
  apply(a.batch_size, cfg.train.batch_size);
  apply(a.lr, cfg.train.learning_rate);
  if (a.no_augment) cfg.train.augment = false;
  cfg.validate();
  set_jobs(a.common.jobs);

  const nn::TrainingSet data = nn::load_training_set(DatasetPaths{a.dataset}, cfg.frame, cfg.gripper);
  if (data.record_count() == 0) throw InputError("dataset " + a.dataset + " has no records");
  const std::string hash = config_hash(cfg);
  const std::string csv_path = a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv;
  const std::string header = "epoch,split,loss,quality_loss,rotation_loss,width_loss,accuracy\n";
  std::string csv = header;

  nn::VgnModel<float> model(cfg.model, substream_seed(cfg.seed, "model"));
  nn::AdamState adam;
  int start = 0;
  if (!a.resume.empty()) {
    nn::Checkpoint ck = nn::load_checkpoint(a.resume);
    if (!(ck.model.config() == cfg.model)) throw InputError("checkpoint architecture differs from the config");
    model = std::move(ck.model);
    if (ck.adam) adam = std::move(*ck.adam);
    start = ck.epochs_done;
    // keep the rows of the epochs already done
    if (fs::exists(csv_path)) {
      std::istringstream in(io::read_file(csv_path));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line))
        if (!line.empty() && std::stoi(line) <= start) csv += line + "\n";
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::printf("training on %zu records from %zu scenes, epochs %d..%d\n", data.record_count(), data.scenes.size(),
              start + 1, cfg.train.epochs);
  nn::train(model, adam, data, cfg.train_config(), start, [&](const nn::EpochLog& e) {
    csv += loss_row(e.epoch, "train", e.train);
    io::write_file_atomic(csv_path, csv);
    nn::save_checkpoint(a.out, model, &adam, e.epoch, hash);
    std::printf("epoch %d  loss %.5f  (q %.5f, r %.5f, w %.5f)  acc %.2f%%  %.0f s\n", e.epoch, e.train.total,
                e.train.quality, e.train.rotation, e.train.width, 100.0 * e.train.correct / std::max<std::size_t>(1, e.train.count),
                seconds_since(t0));
    std::fflush(stdout);
  });
  if (start >= cfg.train.epochs) nn::save_checkpoint(a.out, model, &adam, start, hash);

  const nn::LossBreakdown eval = nn::evaluate(model, data);
  std::printf("training-set quality accuracy: %.2f%% (%zu/%zu), loss %.5f\n", 100.0 * eval.correct / eval.count,
              eval.correct, eval.count, eval.total);
  return 0;
}

// ---------------------------------------------------------------- detect

struct DetectArgs {
  Common common;
  std::string checkpoint, tsdf, out;
  std::optional<double> epsilon, sigma;
  std::optional<int> nms_window, max_detections;
};

void apply_detection(Config& cfg, const std::optional<double>& eps, const std::optional<double>& sigma,
                     const std::optional<int>& window, const std::optional<int>& max) {
  apply(eps, cfg.detection.epsilon);
  apply(sigma, cfg.detection.sigma);
  apply(window, cfg.detection.nms_window);
  apply(max, cfg.detection.max_detections);
}

int detect_cmd(const DetectArgs& a) {
  Config cfg = load(a.common);
  apply_detection(cfg, a.epsilon, a.sigma, a.nms_window, a.max_detections);
  cfg.validate();
  set_jobs(a.common.jobs);
  const nn::Checkpoint ck = nn::load_checkpoint(a.checkpoint);
  const TsdfVolume volume = read_tsdf(a.tsdf, cfg.frame, cfg.truncation_voxels * cfg.frame.voxel_size());
  const PlanResult r = plan(volume, ck.model, cfg.detection, cfg.gripper.max_width);
  std::string text;
  for (const auto& d : r.detections) text += detection_to_json(d) + "\n";
  if (a.out.empty())
    std::fwrite(text.data(), 1, text.size(), stdout);
  else
    io::write_file_atomic(a.out, text);
  std::fprintf(stderr, "%zu detections, planning time %.2f ms\n", r.detections.size(), r.planning_ms);
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  Common common;
  std::string checkpoint, out_dir;
  std::optional<std::string> scenario, policy;
  std::optional<int> m, rounds;
  std::optional<double> epsilon, sigma;
  std::optional<int> nms_window, max_detections;
  bool plot = false;
};

int bench_cmd(const BenchArgs& a) {
  Config cfg = load(a.common);
  if (a.scenario) cfg.scenario = scenario_from_string(*a.scenario);
  if (a.policy) cfg.policy = policy_from_string(*a.policy);
  apply(a.m, cfg.m);
  apply(a.rounds, cfg.rounds);
  apply_detection(cfg, a.epsilon, a.sigma, a.nms_window, a.max_detections);
  cfg.validate();
  set_jobs(a.common.jobs);
  const nn::Checkpoint ck = nn::load_checkpoint(a.checkpoint);
  const BenchConfig bcfg = cfg.bench_config();

  const auto t0 = std::chrono::steady_clock::now();
  const auto rounds = run_benchmark(ck.model, bcfg, cfg.seed);
  BenchmarkReport rep = aggregate(rounds, bcfg);
  rep.config_hash = config_hash(cfg);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  std::string lines;
  for (const auto& r : rounds) lines += round_to_json(r) + "\n";
  io::write_file_atomic(dir / "rounds.jsonl", lines);
  io::write_file_atomic(dir / "report.json", report_to_json(rep) + "\n");
  io::write_file_atomic(dir / "report.csv", reports_to_csv({rep}));
  if (a.plot) io::write_file_atomic(dir / "report.svg", reports_to_svg({rep}));
  std::printf("%s m=%d eps=%.2f %s: success %.1f%% [%.1f, %.1f], cleared %.1f%%, planning %.1f ms (p99 %.1f), "
              "%zu rounds, %.0f s\n",
              to_string(rep.scenario), rep.m, rep.epsilon, to_string(rep.policy), rep.success_rate, rep.success_ci_low,
              rep.success_ci_high, rep.percent_cleared, rep.mean_planning_ms, rep.p99_planning_ms, rep.rounds,
              seconds_since(t0));
  return 0;
}

// ---------------------------------------------------------------- stats

struct StatsArgs {
  Common common;
  std::string dataset, tsdf;
};

int stats_cmd(const StatsArgs& a) {
  Config cfg = load(a.common);
  if (a.dataset.empty() && a.tsdf.empty()) throw InputError("stats needs --dataset or --tsdf");
  if (!a.dataset.empty()) {
    const DatasetPaths paths{a.dataset};
    const DatasetManifest m = manifest_from_json(io::read_file(paths.manifest()));
    const auto records = read_records(paths.records());
    std::size_t pos = 0;
    for (const auto& r : records) pos += r.label;
    std::printf("dataset %s\n  scenes %llu (skipped %llu), N=%d, l=%.3f\n  records %zu (%zu positive, %zu negative)\n",
                a.dataset.c_str(), (unsigned long long)m.scenes, (unsigned long long)m.skipped_scenes, m.resolution,
                m.length, records.size(), pos, records.size() - pos);
    if (pos > 0) {
      GridFrame frame = cfg.frame;
      frame.resolution = m.resolution;
      frame.length = m.length;
      const auto bins = grasp_angle_histogram(records, frame);
      std::printf("  approach angle to gravity (deg): count\n");
      for (int b = 0; b < 18; ++b)
        if (bins[b]) std::printf("    %3d-%3d: %llu\n", 10 * b, 10 * b + 10, (unsigned long long)bins[b]);
    }
  }
  if (!a.tsdf.empty()) {
    const TsdfVolume v = read_tsdf(a.tsdf, cfg.frame);
    std::size_t observed = 0, admissible = 0;
    const int n = v.resolution();
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          observed += v.weight(i, j, k) > 0.0f;
          admissible += v.grasp_admissible(i, j, k);
        }
    std::printf("volume %s: N=%d, %zu observed voxels, %zu grasp-admissible\n", a.tsdf.c_str(), n, observed,
                admissible);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxgrasp: volumetric grasp detection pipeline"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate scenes, fuse volumes and label grasps");
  add_common(g, gen.common);
  g->add_option("--out", gen.out, "Output dataset directory")->required();
  g->add_option("--scenes", gen.scenes, "Number of scenes");
  g->add_option("--points-per-scene", gen.points, "Surface points sampled per scene");
  g->add_option("--pile-fraction", gen.pile_fraction, "Share of pile scenes (rest packed)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the network on a dataset");
  add_common(t, tr.common);
  t->add_option("--dataset", tr.dataset, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Checkpoint path (manifest; weights go to <path>.bin)")->required();
  t->add_option("--resume", tr.resume, "Continue from this checkpoint");
  t->add_option("--loss-csv", tr.loss_csv, "Loss curve CSV (default <out>.loss.csv)");
  t->add_option("--epochs", tr.epochs, "Epochs");
  t->add_option("--batch-size", tr.batch_size, "Records per batch");
  t->add_option("--lr", tr.lr, "Adam learning rate");
  t->add_flag("--no-augment", tr.no_augment, "Disable rotation / shift augmentation");

  DetectArgs de;
  auto* d = app.add_subcommand("detect", "Detect grasps in a .tsdf volume");
  add_common(d, de.common);
  d->add_option("--checkpoint", de.checkpoint, "Checkpoint manifest")->required();
  d->add_option("--tsdf", de.tsdf, "Input volume")->required();
  d->add_option("--out", de.out, "Output JSON lines (default stdout)");
  d->add_option("--epsilon", de.epsilon, "Quality threshold");
  d->add_option("--sigma", de.sigma, "Gaussian smoothing sigma (voxels)");
  d->add_option("--nms-window", de.nms_window, "Non-maxima suppression window (odd)");
  d->add_option("--max-detections", de.max_detections, "Maximum detections");

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Run the clutter removal benchmark");
  add_common(b, be.common);
  b->add_option("--checkpoint", be.checkpoint, "Checkpoint manifest")->required();
  b->add_option("--out-dir", be.out_dir, "Report directory")->required();
  b->add_option("--scenario", be.scenario, "blocks, pile or packed");
  b->add_option("--m", be.m, "Objects per scene");
  b->add_option("--rounds", be.rounds, "Rounds");
  b->add_option("--policy", be.policy, "random_above_eps, max_quality or highest_z");
  b->add_option("--epsilon", be.epsilon, "Quality threshold");
  b->add_option("--sigma", be.sigma, "Gaussian smoothing sigma (voxels)");
  b->add_option("--nms-window", be.nms_window, "Non-maxima suppression window (odd)");
  b->add_option("--max-detections", be.max_detections, "Maximum detections");
  b->add_flag("--plot", be.plot, "Also write report.svg");

  StatsArgs st;
  auto* s = app.add_subcommand("stats", "Summarize a dataset or volume");
  add_common(s, st.common);
  s->add_option("--dataset", st.dataset, "Dataset directory");
  s->add_option("--tsdf", st.tsdf, "Volume file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) return gen_data(gen);
    if (*t) return train_cmd(tr);
    if (*d) return detect_cmd(de);
    if (*b) return bench_cmd(be);
    if (*s) return stats_cmd(st);
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const RangeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
