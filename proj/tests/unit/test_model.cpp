#include "gmop/error.hpp"
#include "gmop/generator.hpp"
#include "gmop/model/bundle.hpp"
#include "gmop/model/frame.hpp"
#include "gmop/model/gmop.hpp"
#include "gmop/neural/optim.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

using namespace gmop;
using namespace gmop::model;
using graphs::InteractionGraph;
using graphs::Strategy;
using scene::Point;

namespace {

std::vector<scene::Scene> corpus(int count, int min_agents, int max_agents, std::uint64_t seed,
                                 std::vector<scene::ScenarioTemplate> templates = {
                                     scene::ScenarioTemplate::CrossingIntersection}) {
  scene::GeneratorConfig g;
  g.count = count;
  g.min_agents = min_agents;
  g.max_agents = max_agents;
  g.n_past = 8;
  g.n_future = 20;
  g.noise_std = 0.02;
  g.templates = std::move(templates);
  return scene::generate_synthetic(g, seed);
}

AutoencoderConfig small_ae() {
  AutoencoderConfig c;
  c.hidden = 16;
  c.latent_dim = 6;
  c.steps = 150;
  c.eval_every = 150;
  return c;
}

GmopConfig small_model(Strategy strategy, std::uint64_t seed = 1) {
  GmopConfig c;
  c.strategy = strategy;
  c.context.past_hidden = 8;
  c.context.context_dim = 8;
  c.context.message_dim = 8;
  c.flow_layers = 3;
  c.flow_hidden = 12;
  c.epochs = 3;
  c.batch_size = 8;
  c.seed = seed;
  c.classifier.enc_dim = 8;
  c.classifier.embed_dim = 12;
  c.classifier.epochs = 2;
  return c;
}

// A pretrained autoencoder shared by the structural tests.
TrajectoryAutoencoder& shared_ae() {
  static TrajectoryAutoencoder ae = [] {
    const auto train = corpus(60, 2, 4, 11);
    TrajectoryAutoencoder out(20, small_ae());
    pretrain_autoencoder(out, train, {}, small_ae());
    return out;
  }();
  return ae;
}

PairClassifier& shared_classifier() {
  static PairClassifier cls = [] {
    const auto train = corpus(40, 2, 3, 12);
    auto cfg = small_model(Strategy::Crossing).classifier;
    PairClassifier out(cfg);
    pretrain_classifier(out, train, {}, Strategy::Crossing, cfg, {});
    return out;
  }();
  return cls;
}

// Gives every trainable flow weight a nonzero value so no term sits at the identity.
void perturb(ParamStore& store, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& p : store.params()) {
    if (!p.trainable) continue;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += d(rng);
  }
}

InteractionGraph random_dag(const scene::Scene& s, std::mt19937_64& rng) {
  std::vector<scene::AgentId> nodes;
  for (const auto& a : s.agents) nodes.push_back(a.id);
  InteractionGraph g(nodes);
  std::vector<std::size_t> order(nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (u(rng) < 0.5) g.add_edge(nodes[order[i]], nodes[order[j]], u(rng));
    }
  }
  return g;
}

}  // namespace

TEST_CASE("agent frame round trip") {
  scene::Trajectory past;
  past.positions = {Point(0.0, 0.0), Point(1.0, 1.0)};
  const auto f = AgentFrame::of(past);
  const Point v(0.3, -2.0);
  CHECK((f.to_global(f.to_local(v)) - v).norm() < 1e-12);
  CHECK(f.to_local(Point(1.0, 1.0)).x() == doctest::Approx(std::sqrt(2.0)));
  const auto deltas = local_deltas(f, past.back(), {Point(2.0, 2.0), Point(3.0, 3.0)});
  const auto back = integrate_local(f, deltas);
  CHECK((back[1] - Point(3.0, 3.0)).norm() < 1e-12);
}

TEST_CASE("autoencoder shapes and determinism") {
  const auto train = corpus(20, 2, 2, 3);
  auto cfg = small_ae();
  cfg.steps = 20;
  TrajectoryAutoencoder a(20, cfg), b(20, cfg);
  pretrain_autoencoder(a, train, {}, cfg);
  pretrain_autoencoder(b, train, {}, cfg);
  for (std::size_t i = 0; i < a.store.size(); ++i) CHECK(a.store.params()[i].value == b.store.params()[i].value);
  const auto z = a.encode_future(train[0].agents[0]);
  CHECK(z.size() == cfg.latent_dim);
  CHECK(a.decode(z).size() == 20);
  CHECK_THROWS_AS(a.encode(std::vector<Point>(5, Point::Zero())), ShapeError);
}

TEST_CASE("classifier contracts") {
  auto& cls = shared_classifier();
  CHECK_THROWS_AS(cls.classify(Vec::Zero(3)), ShapeError);
  CHECK(cls.feature_dim() == 2 * 8 + 11);
  const auto s = scene::observe(corpus(1, 3, 3, 5)[0]);
  CHECK(cls.predict_labels(s).size() == 3);
  const auto g = predicted_graph(cls, s);
  CHECK(g.is_dag());

  SUBCASE("single-class corpus") {
    const auto lanes = corpus(20, 2, 3, 6, {scene::ScenarioTemplate::IndependentLanes});
    auto cfg = small_model(Strategy::Crossing).classifier;
    cfg.epochs = 10;
    cfg.batch_size = 8;
    PairClassifier fresh(cfg);
    std::vector<std::string> lines;
    const auto report =
        pretrain_classifier(fresh, lanes, lanes, Strategy::Crossing, cfg, {}, [&](const std::string& l) {
          lines.push_back(l);
        });
    CHECK(report.degenerate);
    CHECK(std::any_of(lines.begin(), lines.end(), [](const auto& l) { return l.find("warning") == 0; }));
    CHECK(report.recall[0] == 1.0);
    CHECK(report.accuracy == 1.0);
  }

  SUBCASE("non-crossing strategy is rejected") {
    PairClassifier fresh(small_model(Strategy::Crossing).classifier);
    CHECK_THROWS_AS(pretrain_classifier(fresh, corpus(2, 2, 2, 1), {}, Strategy::Euclidean, {}, {}), ConfigError);
  }
}

TEST_CASE("context encoder contracts") {
  GmopModel m(small_model(Strategy::Euclidean), shared_ae());
  perturb(m.store, 3, 0.3);
  const auto s = scene::observe(corpus(1, 4, 4, 21)[0]);
  const auto& ctx = m.context();
  auto encode = [&](const scene::ObservedScene& sc, const InteractionGraph& g) {
    Tape tape(false);
    std::vector<Vec> out;
    for (auto v : ctx.encode(tape, m.store, sc, g)) out.push_back(tape.value(v));
    return out;
  };

  SUBCASE("independence graph isolates agents") {
    const auto base = encode(s, graphs::independence_graph(s));
    auto moved = s;
    for (auto& p : moved.agents[1].past.positions) p += Point(3.0, -1.0);
    moved.agents[2].past.positions.back() += Point(0.5, 0.5);
    const auto after = encode(moved, graphs::independence_graph(moved));
    CHECK(base[0] == after[0]);
    CHECK(base[3] == after[3]);
  }

  SUBCASE("zero edge weight equals deleting the edge") {
    std::vector<scene::AgentId> nodes;
    for (const auto& a : s.agents) nodes.push_back(a.id);
    InteractionGraph with(nodes), without(nodes);
    with.add_edge(nodes[0], nodes[1], 0.0);
    with.add_edge(nodes[2], nodes[1], 0.7);
    without.add_edge(nodes[2], nodes[1], 0.7);
    const auto a = encode(s, with);
    const auto b = encode(s, without);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("permutation equivariance") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      const auto scene = scene::observe(corpus(1, 4, 4, 100 + trial)[0]);
      auto g = random_dag(corpus(1, 4, 4, 100 + trial)[0], rng);
      std::vector<std::size_t> perm = {2, 0, 3, 1};
      scene::ObservedScene permuted = scene;
      std::vector<scene::AgentId> new_ids = {17, 5, 9, 2};
      for (std::size_t i = 0; i < 4; ++i) {
        permuted.agents[perm[i]] = scene.agents[i];
        permuted.agents[perm[i]].id = new_ids[i];
      }
      std::vector<scene::AgentId> nodes;
      for (const auto& a : permuted.agents) nodes.push_back(a.id);
      InteractionGraph pg(nodes);
      for (const auto& e : g.edges()) {
        pg.add_edge(new_ids[g.index_of(e.src)], new_ids[g.index_of(e.dst)], e.weight);
      }
      const auto a = encode(scene, g);
      const auto b = encode(permuted, pg);
      for (std::size_t i = 0; i < 4; ++i) CHECK((a[i] - b[perm[i]]).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SUBCASE("node mismatch") {
    InteractionGraph wrong(std::vector<scene::AgentId>{0, 1});
    CHECK_THROWS_AS(encode(s, wrong), std::invalid_argument);
  }
}

TEST_CASE("joint scene nll factorization") {
  GmopModel m(small_model(Strategy::Euclidean), shared_ae());
  perturb(m.store, 5, 0.2);
  std::mt19937_64 rng(8);

  SUBCASE("random DAGs") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto s = corpus(1, 1 + trial % 4, 1 + trial % 4, 300 + trial)[0];
      const auto g = random_dag(s, rng);
      double terms = 0.0;
      for (std::size_t a = 0; a < s.agents.size(); ++a) terms += m.agent_conditional_nll(s, g, a);
      CHECK(std::abs(m.joint_scene_nll(s, g) - terms) <= 1e-10);
    }
  }

  SUBCASE("independence equals per-agent unconditional terms") {
    const auto s = corpus(1, 3, 3, 41)[0];
    const auto g = graphs::independence_graph(scene::observe(s));
    const auto latents = m.target_latents(s);
    Tape tape(false);
    const auto ctx = m.context().encode(tape, m.store, scene::observe(s), g);
    double total = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      Vec cond(tape.value(ctx[a]).size() + latents[a].size());
      cond << tape.value(ctx[a]), Vec::Zero(latents[a].size());
      total -= m.flow().log_prob(m.store, latents[a], cond);
    }
    CHECK(std::abs(m.joint_scene_nll(s, g) - total) <= 1e-10);
  }

  SUBCASE("chain A->B two-call oracle") {
    const auto s = corpus(1, 2, 2, 42)[0];
    InteractionGraph g(std::vector<scene::AgentId>{s.agents[0].id, s.agents[1].id});
    g.add_edge(s.agents[0].id, s.agents[1].id, 0.8);
    const auto latents = m.target_latents(s);
    Tape tape(false);
    const auto ctx = m.context().encode(tape, m.store, scene::observe(s), g);
    Vec cond_a(m.context().output_dim() + latents[0].size()), cond_b(m.context().output_dim() + latents[0].size());
    cond_a << tape.value(ctx[0]), Vec::Zero(latents[0].size());
    cond_b << tape.value(ctx[1]), latents[0];
    const double expected = -(m.flow().log_prob(m.store, latents[0], cond_a) +
                              m.flow().log_prob(m.store, latents[1], cond_b));
    CHECK(m.joint_scene_nll(s, g) == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("cyclic graph is a contract violation") {
    const auto s = corpus(1, 2, 2, 43)[0];
    InteractionGraph g(std::vector<scene::AgentId>{s.agents[0].id, s.agents[1].id});
    g.add_edge(s.agents[0].id, s.agents[1].id, 1.0);
    g.add_edge(s.agents[1].id, s.agents[0].id, 1.0);
    CHECK_THROWS_AS(m.joint_scene_nll(s, g), ContractError);
  }
}

TEST_CASE("one-agent scene is strategy independent") {
  const auto s = corpus(1, 2, 2, 44)[0];
  scene::Scene single = s;
  single.agents.resize(1);
  std::optional<double> first;
  for (const auto strategy : graphs::kAllStrategies) {
    std::optional<PairClassifier> cls;
    if (graphs::is_crossing_family(strategy)) cls = shared_classifier();
    GmopModel m(small_model(strategy), shared_ae(), cls);
    const double v = m.joint_scene_nll(single);
    if (!first) first = v;
    CHECK(v == *first);
  }
}

TEST_CASE("end-to-end joint loss gradient") {
  const auto s = corpus(1, 2, 2, 45)[0];
  for (const auto strategy : {Strategy::Euclidean, Strategy::NoHeuristic}) {
    GmopModel m(small_model(strategy), shared_ae());
    perturb(m.store, 6, 0.2);
    const auto observed = scene::observe(s);
    const auto latents = m.target_latents(s);
    InteractionGraph g(std::vector<scene::AgentId>{s.agents[0].id, s.agents[1].id});
    g.add_edge(s.agents[0].id, s.agents[1].id, 0.6);
    for (ParamStore* store : m.trainable_stores()) {
      const auto loss = [&](ParamStore&, bool with_grad) {
        Tape tape(with_grad);
        const Var nll = strategy == Strategy::NoHeuristic ? m.training_nll(tape, observed, latents, nullptr)
                                                          : m.joint_scene_nll(tape, observed, latents, g);
        if (with_grad) tape.backward(nll);
        return tape.scalar(nll);
      };
      const auto report = neural::grad_check(loss, *store, 1e-4, {1e-5, 6, 1});
      INFO("worst ", report.max_rel_error);
      CHECK(report.pass);
    }
  }
}

TEST_CASE("dependency contract") {
  CHECK_THROWS_AS(GmopModel(small_model(Strategy::Crossing), shared_ae()), DependencyError);
  CHECK_NOTHROW(GmopModel(small_model(Strategy::Independence), shared_ae()));
  CHECK_NOTHROW(GmopModel(small_model(Strategy::NoHeuristic), shared_ae()));
}

TEST_CASE("training, prediction and bundles") {
  const auto all = corpus(50, 2, 3, 51);
  const std::vector<scene::Scene> train_set(all.begin(), all.begin() + 40);
  const std::vector<scene::Scene> val_set(all.begin() + 40, all.end());

  GmopModel untrained(small_model(Strategy::Independence), shared_ae());
  CHECK_THROWS_AS(untrained.predict_scene(scene::observe(val_set[0]), 2, 1), StateError);
  CHECK_THROWS_AS(untrained.scene_log_likelihood(val_set[0]), StateError);

  GmopModel a(small_model(Strategy::Euclidean), shared_ae());
  GmopModel b(small_model(Strategy::Euclidean), shared_ae());
  const auto ra = train(a, train_set, val_set);
  const auto rb = train(b, train_set, val_set);
  CHECK(epoch_log_csv(ra) == epoch_log_csv(rb));
  REQUIRE(ra.epochs.size() == 4);
  for (std::size_t i = 1; i < ra.epochs.size(); ++i) {
    CHECK(ra.epochs[i].best_val_nll <= ra.epochs[i - 1].best_val_nll);
  }
  CHECK(ra.best_val_nll == doctest::Approx(mean_joint_nll(a, val_set)).epsilon(1e-12));

  const auto observed = scene::observe(val_set[0]);
  const auto samples = a.predict_scene(observed, 6, 9);
  REQUIRE(samples.size() == 6);
  for (const auto& smp : samples) {
    REQUIRE(smp.size() == observed.agents.size());
    for (const auto& agent : smp) CHECK(agent.size() == 20);
  }
  CHECK(a.predict_scene(observed, 6, 9) == samples);
  CHECK(a.predict_scene(observed, 6, 10) != samples);
  CHECK(a.scene_log_likelihood(val_set[0]) == -a.joint_scene_nll(val_set[0]));

  SUBCASE("bundle round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "gmop_test_bundle";
    std::filesystem::remove_all(dir);
    save_bundle(a, ra, dir);
    auto loaded = load_bundle(dir);
    CHECK(loaded.trained());
    CHECK(loaded.predict_scene(observed, 6, 9) == samples);
    CHECK(loaded.joint_scene_nll(val_set[0]) == a.joint_scene_nll(val_set[0]));
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_bundle(dir), IoError);
  }

  SUBCASE("independence isolation") {
    GmopModel ind(small_model(Strategy::Independence), shared_ae());
    train(ind, train_set, val_set);
    auto moved = observed;
    for (auto& p : moved.agents[1].past.positions) p += Point(2.0, 1.0);
    const auto before = ind.predict_scene(observed, 4, 3);
    const auto after = ind.predict_scene(moved, 4, 3);
    for (std::size_t s = 0; s < 4; ++s) CHECK(before[s][0] == after[s][0]);
  }

  SUBCASE("crossing and no-heuristic variants train") {
    GmopModel c(small_model(Strategy::Crossing), shared_ae(), shared_classifier());
    const auto rc = train(c, train_set, val_set);
    CHECK(std::isfinite(rc.best_val_nll));
    GmopModel n(small_model(Strategy::NoHeuristic), shared_ae());
    const auto before = n.classifier()->store.params()[0].value;
    const auto rn = train(n, train_set, val_set);
    CHECK(std::isfinite(rn.best_val_nll));
    if (rn.best_epoch > 0) CHECK(n.classifier()->store.params()[0].value != before);
  }
}
