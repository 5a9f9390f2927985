// Properties that only hold after real training runs.
#include "gmop/generator.hpp"
#include "gmop/model/gmop.hpp"

#include <doctest.h>

#include <cmath>

using namespace gmop;
using namespace gmop::model;
using graphs::Strategy;
using scene::Point;

namespace {

std::vector<scene::Scene> corpus(int count, std::vector<scene::ScenarioTemplate> templates, std::uint64_t seed,
                                 double noise = 0.02) {
  scene::GeneratorConfig g;
  g.count = count;
  g.templates = std::move(templates);
  g.noise_std = noise;
  return scene::generate_synthetic(g, seed);
}

// Same scene with each agent's future replaced by another scene's displacements, started from its own last position.
scene::Scene with_foreign_futures(const scene::Scene& s, const scene::Scene& other) {
  scene::Scene out = s;
  for (std::size_t a = 0; a < out.agents.size(); ++a) {
    const auto& src = other.agents[a % other.agents.size()];
    Point prev = src.past.positions.back();
    Point cur = out.agents[a].past.positions.back();
    for (std::size_t t = 0; t < out.agents[a].future.positions.size(); ++t) {
      cur += src.future.positions[t] - prev;
      prev = src.future.positions[t];
      out.agents[a].future.positions[t] = cur;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("autoencoder reconstructs constant-velocity futures") {
  const auto scenes = corpus(300, {scene::ScenarioTemplate::IndependentLanes}, 1, 0.0);
  const auto [train, val] = scene::split_dataset(scenes, 0.8, 1);
  AutoencoderConfig cfg;
  cfg.steps = 2000;
  TrajectoryAutoencoder ae(30, cfg);
  const auto report = pretrain_autoencoder(ae, train, val, cfg);
  INFO("held-out mean per-step error ", report.val.mean_m);
  CHECK(report.val.mean_m < 0.05);
}

TEST_CASE("flipped labels swap the influence recalls") {
  const auto scenes = corpus(800, {scene::ScenarioTemplate::CrossingIntersection}, 2);
  const auto [train, val] = scene::split_dataset(scenes, 0.75, 2);
  ClassifierConfig cfg;
  cfg.epochs = 10;
  PairClassifier plain(cfg), flipped(cfg);
  const auto a = pretrain_classifier(plain, train, val, Strategy::Crossing, cfg, {});
  const auto b = pretrain_classifier(flipped, train, val, Strategy::FlippedCrossing, cfg, {});
  INFO("crossing recalls ", a.recall[0], " ", a.recall[1], " ", a.recall[2]);
  INFO("flipped recalls ", b.recall[0], " ", b.recall[1], " ", b.recall[2]);
  CHECK(std::abs(a.recall[0] - b.recall[0]) <= 0.05);
  CHECK(std::abs(a.recall[1] - b.recall[2]) <= 0.05);
  CHECK(std::abs(a.recall[2] - b.recall[1]) <= 0.05);
}

TEST_CASE("trained model: validation gain, likelihood ranking and continuity") {
  const auto scenes = corpus(400, {scene::ScenarioTemplate::CrossingIntersection}, 3);
  const auto [train, val] = scene::split_dataset(scenes, 0.8, 3);
  AutoencoderConfig ac;
  ac.steps = 800;
  TrajectoryAutoencoder ae(30, ac);
  pretrain_autoencoder(ae, train, val, ac);
  GmopConfig mc;
  mc.strategy = Strategy::Euclidean;
  mc.epochs = 30;
  mc.seed = 2;
  GmopModel m(mc, std::move(ae));
  const auto report = model::train(m, train, val);
  CHECK(report.best_val_nll < report.initial_val_nll);

  int likelier = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto& other = val[(i + val.size() / 2) % val.size()];
    likelier += m.scene_log_likelihood(val[i]) > m.scene_log_likelihood(with_foreign_futures(val[i], other));
  }
  INFO("ground truth likelier on ", likelier, " of ", val.size());
  CHECK(static_cast<double>(likelier) >= 0.8 * static_cast<double>(val.size()));

  const scene::AgentTypeTable types;
  int far = 0, total = 0;
  for (const auto& s : val) {
    const auto samples = m.predict_scene(scene::observe(s), 20, 5);
    for (const auto& sample : samples) {
      for (std::size_t a = 0; a < s.agents.size(); ++a) {
        const double bound = types[s.agents[a].kind].avg_speed_mps * s.agents[a].past.dt * 3.0;
        far += (sample[a].front() - s.agents[a].past.positions.back()).norm() > bound;
        ++total;
      }
    }
  }
  INFO(far, " of ", total, " first steps beyond the kinematic bound");
  CHECK(far == 0);
}
