#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "oracles.hpp"
#include "voxgrasp/error.hpp"
#include "voxgrasp/io.hpp"
#include "voxgrasp/neural.hpp"

using namespace voxgrasp;
using namespace voxgrasp::nn;
using namespace testing;

namespace {

template <class T>
bool same_weights(const VgnModel<T>& a, const VgnModel<T>& b) {
  for (std::size_t l = 0; l < a.layers().size(); ++l)
    if (a.layers()[l].weight->value.data != b.layers()[l].weight->value.data ||
        a.layers()[l].bias->value.data != b.layers()[l].bias->value.data)
      return false;
  return true;
}

const ModelConfig kTiny{{4, 6, 8}, {8, 6, 4}};

}  // namespace

TEST_CASE("shapes at N = 40") {
  const VgnModel<float> m({}, 1);
  Tape<float> tape;
  auto x = make_leaf(Tensor<float>({1, 1, 40, 40, 40}, 0.1f), false);
  const auto trunk = m.trunk(tape, x);
  CHECK(trunk.encoded->value.shape == std::vector<int>{1, 64, 5, 5, 5});
  CHECK(trunk.features->value.shape == std::vector<int>{1, 16, 40, 40, 40});
  const auto heads = m.heads_dense(tape, trunk.features);
  CHECK(heads.quality_logit->value.shape == std::vector<int>{1, 1, 40, 40, 40});
  CHECK(heads.rotation->value.shape == std::vector<int>{1, 4, 40, 40, 40});
  CHECK(heads.width->value.shape == std::vector<int>{1, 1, 40, 40, 40});
}

TEST_CASE("predicted maps have unit rotations and bounded widths") {
  Rng rng(3);
  const VgnModel<float> m({}, 2);
  for (int n : {16, 40}) {
    const auto values = testing::random_floats(rng, std::size_t(n) * n * n);
    const GraspMap map = predict(m, values, n);
    CHECK(map.resolution == n);
    const std::size_t cells = std::size_t(n) * n * n;
    REQUIRE(map.rotation.size() == 4 * cells);
    double worst = 0;
    for (std::size_t i = 0; i < cells; ++i) {
      double sq = 0;
      for (int c = 0; c < 4; ++c) sq += double(map.rotation[c * cells + i]) * map.rotation[c * cells + i];
      worst = std::max(worst, std::abs(std::sqrt(sq) - 1.0));
      REQUIRE(map.quality[i] > 0.0f);
      REQUIRE(map.quality[i] < 1.0f);
      REQUIRE(map.width[i] >= 0.0f);
      REQUIRE(map.width[i] <= 1.0f);
    }
    CHECK(worst < 1e-6);
  }
  CHECK_THROWS_AS(predict(m, std::vector<float>(12 * 12 * 12), 12), ShapeError);
  CHECK_THROWS_AS(predict(m, std::vector<float>(100), 16), ShapeError);
}

TEST_CASE("loss identities") {
  CHECK(std::abs(binary_cross_entropy(0.5, 1) - std::numbers::ln2) < 1e-9);
  CHECK(std::abs(binary_cross_entropy(0.5, 0) - std::numbers::ln2) < 1e-9);

  Rng rng(5);
  for (int n = 0; n < 100; ++n) {
    const Quat t = testing::random_quat(rng);
    const Quat flipped = t * rotation_z(std::numbers::pi);
    const std::array<double, 4> p{flipped.w(), flipped.x(), flipped.y(), flipped.z()};
    CHECK(symmetric_rotation_loss(p, t) < 1e-12);
    const std::array<double, 4> neg{-t.w(), -t.x(), -t.y(), -t.z()};
    CHECK(symmetric_rotation_loss(neg, t) < 1e-12);
    CHECK(quat_loss(p, p) == doctest::Approx(0.0).epsilon(1e-12));
  }

  // logit 0 gives q = 0.5: the batch loss of a single negative is ln 2
  Tape<double> tape;
  auto z = make_leaf(Tensor<double>({1, 1}, 0.0));
  auto r = make_leaf(Tensor<double>({1, 4}, 0.5));
  auto w = make_leaf(Tensor<double>({1, 1}, 0.3));
  const auto loss = grasp_loss(tape, z, r, w, {LossTarget{0, Quat::Identity(), 0.9}});
  CHECK(std::abs(loss->value.data[0] - std::numbers::ln2) < 1e-9);
  CHECK_THROWS_AS(grasp_loss(tape, z, r, w, {}), InputError);
}

TEST_CASE("negative records pass no gradient to rotation or width") {
  Rng rng(8);
  const int m = 6;
  Tape<double> tape;
  Tensor<double> zt({m, 1}), rt({m, 4}), wt({m, 1});
  for (auto& v : zt.data) v = uniform(rng, -2, 2);
  for (auto& v : rt.data) v = uniform(rng, -1, 1);
  for (auto& v : wt.data) v = uniform(rng, 0, 1);
  auto z = make_leaf(zt), r = make_leaf(rt), w = make_leaf(wt);
  std::vector<LossTarget> targets;
  for (int i = 0; i < m; ++i) targets.push_back({i % 2, testing::random_quat(rng), uniform(rng, 0, 1)});
  LossBreakdown b;
  tape.backward(grasp_loss(tape, z, r, w, targets, &b));
  for (int i = 0; i < m; ++i) {
    if (targets[i].label) continue;
    CHECK(w->grad.data[i] == 0.0);
    for (int c = 0; c < 4; ++c) CHECK(r->grad.data[4 * i + c] == 0.0);
    CHECK(z->grad.data[i] != 0.0);
  }
  CHECK(b.count == m);
  CHECK(b.total == doctest::Approx(b.quality + b.rotation + b.width));
}

TEST_CASE("full-model gradients match central differences on 16^3 inputs") {
  Rng rng(13);
  const TrainingSet set = random_set(rng, 16, 2, 4);
  const Items items = all_items(set);

  VgnModel<double> md({}, 21);
  randomize_biases(md, rng);
  VgnModel<double> ref = md.cast<double>();
  const double rel64 = gradient_check(md, ref, set, items, rng);
  MESSAGE("f64 worst relative error: " << rel64);
  CHECK(rel64 < 1e-4);

  VgnModel<float> mf = md.cast<float>();
  VgnModel<double> widened = mf.cast<double>();  // same rounded weights as the f32 model
  const double rel32 = gradient_check(mf, widened, set, items, rng);
  MESSAGE("f32 worst relative error: " << rel32);
  CHECK(rel32 < 1e-2);
}

TEST_CASE("initialization is a pure function of the seed") {
  const VgnModel<float> a({}, 4), b({}, 4), c({}, 5);
  CHECK(same_weights(a, b));
  CHECK_FALSE(same_weights(a, c));
  for (const auto& l : a.layers()) {
    const int fan_in = l.weight->value.dim(1) * l.weight->value.dim(2) * l.weight->value.dim(3) * l.weight->value.dim(4);
    const float bound = static_cast<float>(std::sqrt(6.0 / fan_in));
    for (float w : l.weight->value.data) REQUIRE(std::abs(w) <= bound);
    for (float v : l.bias->value.data) REQUIRE(v == 0.0f);
  }
  CHECK(a.parameter_count() > 0);
}

TEST_CASE("shifting the input by whole coarse cells shifts the outputs") {
  // Zero biases keep empty space at exactly zero, so zero padding looks like
  // more empty space. The grid is large enough that the blob's receptive
  // field never reaches a face, where upsampling clamps instead.
  const int n = 88, shift = 8;
  const VgnModel<float> m(kTiny, 9);
  Rng rng(2);
  std::vector<float> a(std::size_t(n) * n * n, 0.0f), b = a;
  auto at = [n](std::vector<float>& g, int i, int j, int k) -> float& { return g[(std::size_t(k) * n + j) * n + i]; };
  for (int k = 40; k < 45; ++k)
    for (int j = 40; j < 45; ++j)
      for (int i = 32; i < 37; ++i) {
        const float v = float(uniform(rng, -1, 1));
        at(a, i, j, k) = v;
        at(b, i + shift, j, k) = v;
      }
  const GraspMap ma = predict(m, a, n), mb = predict(m, b, n);
  const std::size_t cells = std::size_t(n) * n * n;
  double worst = 0, signal = 0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i + shift < n; ++i) {
        const std::size_t ia = (std::size_t(k) * n + j) * n + i, ib = ia + shift;
        signal = std::max(signal, double(std::abs(ma.quality[ia] - 0.5f)));
        worst = std::max(worst, double(std::abs(ma.quality[ia] - mb.quality[ib])));
        worst = std::max(worst, double(std::abs(ma.width[ia] - mb.width[ib])));
        for (int c = 0; c < 4; ++c)
          worst = std::max(worst, double(std::abs(ma.rotation[c * cells + ia] - mb.rotation[c * cells + ib])));
      }
  CHECK(signal > 1e-4);  // the blob does reach the heads
  CHECK(worst < 1e-5);
}

TEST_CASE("training lowers the loss for several seeds") {
  Rng rng(17);
  const TrainingSet set = random_set(rng, 16, 4, 8);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    VgnModel<float> m(kTiny, seed);
    const double before = evaluate(m, set).total;
    TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 8;
    tc.learning_rate = 3e-3;
    tc.augment = false;
    tc.seed = seed;
    AdamState adam;
    train(m, adam, set, tc);
    const double after = evaluate(m, set).total;
    CHECK(after < before);
  }
}

TEST_CASE("a small model overfits a 64-record toy set") {
  Rng rng(23);
  const TrainingSet set = random_set(rng, 16, 4, 16);
  REQUIRE(set.record_count() == 64);
  VgnModel<float> m(kTiny, 1);
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 16;
  tc.learning_rate = 1e-2;
  tc.augment = false;
  AdamState adam;
  double best = 0;
  train(m, adam, set, tc, 0, [&](const EpochLog& e) {
    best = std::max(best, double(e.train.correct) / double(e.train.count));
  });
  const LossBreakdown fin = evaluate(m, set);
  MESSAGE("toy accuracy after 200 epochs: " << double(fin.correct) / fin.count);
  CHECK(double(fin.correct) / double(fin.count) >= 0.95);
}

TEST_CASE("resuming from a checkpoint reproduces an uninterrupted run") {
  const auto dir = std::filesystem::temp_directory_path() / "voxgrasp_test_neural";
  std::filesystem::create_directories(dir);
  Rng rng(31);
  const TrainingSet set = random_set(rng, 16, 3, 6);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 5;
  tc.seed = 12;

  VgnModel<float> straight(kTiny, 1);
  AdamState adam_a;
  train(straight, adam_a, set, tc);

  VgnModel<float> first(kTiny, 1);
  AdamState adam_b;
  TrainConfig partial = tc;
  partial.epochs = 1;
  train(first, adam_b, set, partial);
  save_checkpoint(dir / "ck.json", first, &adam_b, 1, "hash");
  Checkpoint ck = load_checkpoint(dir / "ck.json");
  CHECK(ck.epochs_done == 1);
  CHECK(ck.config_hash == "hash");
  REQUIRE(ck.adam.has_value());
  CHECK(ck.adam->step == adam_b.step);
  CHECK(same_weights(ck.model, first));
  train(ck.model, *ck.adam, set, tc, 1);
  CHECK(same_weights(ck.model, straight));
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto dir = std::filesystem::temp_directory_path() / "voxgrasp_test_neural_bad";
  std::filesystem::create_directories(dir);
  const VgnModel<float> m(kTiny, 1);
  save_checkpoint(dir / "ck.json", m, nullptr, 0, "");
  const Checkpoint ok = load_checkpoint(dir / "ck.json");
  CHECK_FALSE(ok.adam.has_value());
  CHECK(ok.model.config() == kTiny);

  std::string text = io::read_file(dir / "ck.json");
  const auto at = text.find("VGNCKPT1");
  REQUIRE(at != std::string::npos);
  text[at] = 'X';
  io::write_file_atomic(dir / "magic.json", text);
  std::filesystem::copy_file(dir / "ck.json.bin", dir / "magic.json.bin");
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.json"), FormatError);

  std::filesystem::create_directories(dir / "noblob");
  std::filesystem::copy_file(dir / "ck.json", dir / "noblob" / "ck.json");
  CHECK_THROWS_AS(load_checkpoint(dir / "noblob" / "ck.json"), FormatError);

  const std::string blob = io::read_file(dir / "ck.json.bin");
  std::filesystem::create_directories(dir / "short");
  std::filesystem::copy_file(dir / "ck.json", dir / "short" / "ck.json");
  io::write_file_atomic(dir / "short" / "ck.json.bin", blob.substr(0, blob.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(dir / "short" / "ck.json"), FormatError);
  std::filesystem::remove_all(dir);
}
