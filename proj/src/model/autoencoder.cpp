#include "gmop/model/autoencoder.hpp"

#include "gmop/error.hpp"
#include "gmop/neural/optim.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

namespace gmop::model {

using neural::Activation;
using neural::Mat;

TrajectoryAutoencoder::TrajectoryAutoencoder(int n_future, const AutoencoderConfig& config)
    : config_(config), n_future_(n_future) {
  if (n_future < 1) throw std::invalid_argument("autoencoder needs n_future >= 1");
  std::mt19937_64 rng(config.seed);
  enc_ = neural::GruCell::create(store, "ae.enc", 2, config.hidden, rng);
  to_latent_ =
      neural::Dense::create(store, "ae.to_latent", config.hidden, config.latent_dim, Activation::Identity, rng);
  from_latent_ =
      neural::Dense::create(store, "ae.from_latent", config.latent_dim, config.hidden, Activation::Tanh, rng);
  dec_ = neural::GruCell::create(store, "ae.dec", 2, config.hidden, rng);
  head_ = neural::Dense::create(store, "ae.head", config.hidden, 2, Activation::Identity, rng);
  scale_ = store.add("ae.displacement_scale", Mat::Ones(1, 1), false);
  latent_mean_ = store.add("ae.latent_mean", Mat::Zero(config.latent_dim, 1), false);
  latent_std_ = store.add("ae.latent_std", Mat::Ones(config.latent_dim, 1), false);
}

double TrajectoryAutoencoder::displacement_scale() const { return store[scale_].value(0, 0); }

void TrajectoryAutoencoder::set_displacement_scale(double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("displacement scale must be positive");
  store[scale_].value(0, 0) = scale;
}

void TrajectoryAutoencoder::set_latent_stats(const Vec& mean, const Vec& stddev) {
  store[latent_mean_].value = mean;
  store[latent_std_].value = stddev.cwiseMax(1e-3);
}

Var TrajectoryAutoencoder::encode(Tape& tape, const std::vector<Point>& local_deltas) {
  if (static_cast<int>(local_deltas.size()) != n_future_) {
    throw ShapeError(fmt::format("autoencoder expects {} displacements, got {}", n_future_, local_deltas.size()));
  }
  const double inv = 1.0 / displacement_scale();
  std::vector<Var> seq;
  seq.reserve(local_deltas.size());
  for (const auto& d : local_deltas) seq.push_back(tape.constant(d * inv));
  const Var h = neural::gru_encode(tape, store, enc_, seq);
  const Var raw = to_latent_.forward(tape, store, h);
  const Vec inv_std = store[latent_std_].value.col(0).cwiseInverse();
  return tape.mul(tape.sub(raw, tape.constant(store[latent_mean_].value.col(0))), tape.constant(inv_std));
}

std::vector<Var> TrajectoryAutoencoder::decode(Tape& tape, Var latent) {
  const Var raw = tape.add(tape.mul(latent, tape.constant(store[latent_std_].value.col(0))),
                           tape.constant(store[latent_mean_].value.col(0)));
  const Var h0 = from_latent_.forward(tape, store, raw);
  auto out = neural::gru_decode(tape, store, dec_, head_, h0, n_future_);
  for (auto& v : out) v = tape.scale(v, displacement_scale());
  return out;
}

Vec TrajectoryAutoencoder::encode(const std::vector<Point>& local_deltas) {
  Tape tape(false);
  return tape.value(encode(tape, local_deltas));
}

std::vector<Point> TrajectoryAutoencoder::decode(const Vec& latent) {
  Tape tape(false);
  const auto vars = decode(tape, tape.constant(latent));
  std::vector<Point> out;
  out.reserve(vars.size());
  for (auto v : vars) out.emplace_back(tape.value(v));
  return out;
}

Vec TrajectoryAutoencoder::encode_future(const scene::Agent& agent) {
  const auto frame = AgentFrame::of(agent.past);
  return encode(local_deltas(frame, agent.past.back(), agent.future.positions));
}

namespace {

struct Sample {
  std::vector<Point> deltas;  // local frame
};

std::vector<Sample> collect(const std::vector<scene::Scene>& scenes) {
  std::vector<Sample> out;
  for (const auto& s : scenes) {
    for (const auto& a : s.agents) {
      const auto frame = AgentFrame::of(a.past);
      out.push_back({local_deltas(frame, a.past.back(), a.future.positions)});
    }
  }
  return out;
}

ReconstructionError measure(TrajectoryAutoencoder& ae, const std::vector<Sample>& samples) {
  ReconstructionError err;
  if (samples.empty()) return err;
  std::size_t steps = 0;
  for (const auto& s : samples) {
    const auto rec = ae.decode(ae.encode(s.deltas));
    Point pos_true = Point::Zero(), pos_rec = Point::Zero();
    for (std::size_t t = 0; t < s.deltas.size(); ++t) {
      pos_true += s.deltas[t];
      pos_rec += rec[t];
      err.mean_m += (pos_true - pos_rec).norm();
      ++steps;
    }
    err.final_m += (pos_true - pos_rec).norm();
  }
  err.mean_m /= static_cast<double>(steps);
  err.final_m /= static_cast<double>(samples.size());
  return err;
}

// Squared error of displacements plus squared error of integrated positions, in scaled units.
Var sample_loss(Tape& tape, TrajectoryAutoencoder& ae, const Sample& s) {
  const auto rec = ae.decode(tape, ae.encode(tape, s.deltas));
  const double inv = 1.0 / ae.displacement_scale();
  const double n = static_cast<double>(s.deltas.size());
  std::vector<Var> terms;
  Var pos_err = tape.constant(Vec::Zero(2));
  for (std::size_t t = 0; t < rec.size(); ++t) {
    const Var e = tape.scale(tape.sub(rec[t], tape.constant(s.deltas[t])), inv);
    pos_err = tape.add(pos_err, e);
    terms.push_back(tape.concat({e, tape.scale(pos_err, 1.0 / std::sqrt(n))}));
  }
  return tape.scale(tape.sum(tape.square(tape.concat(terms))), 1.0 / n);
}

}  // namespace

ReconstructionError reconstruction_error(TrajectoryAutoencoder& ae, const std::vector<scene::Scene>& scenes) {
  return measure(ae, collect(scenes));
}

AutoencoderReport pretrain_autoencoder(TrajectoryAutoencoder& ae, const std::vector<scene::Scene>& train,
                                       const std::vector<scene::Scene>& val, const AutoencoderConfig& config,
                                       const Logger& log) {
  const auto samples = collect(train);
  if (samples.empty()) throw std::invalid_argument("pretrain_autoencoder: no training agents");
  const auto val_samples = collect(val);

  double sq = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    for (const auto& d : s.deltas) {
      sq += d.squaredNorm();
      count += 2;
    }
  }
  ae.set_displacement_scale(std::max(std::sqrt(sq / static_cast<double>(count)), 1e-3));
  ae.set_latent_stats(Vec::Zero(ae.latent_dim()), Vec::Ones(ae.latent_dim()));

  AutoencoderReport report;
  std::mt19937_64 rng(config.seed ^ 0x5eedae);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  ParamStore last_good = ae.store;
  double running = 0.0;
  const neural::AdamConfig adam{config.lr};
  for (int step = 1; step <= config.steps; ++step) {
    double batch_loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      Tape tape;
      const Var loss = tape.scale(sample_loss(tape, ae, samples[pick(rng)]), 1.0 / config.batch_size);
      batch_loss += tape.scalar(loss);
      if (!std::isfinite(batch_loss)) break;
      tape.backward(loss);
    }
    if (!std::isfinite(batch_loss)) {
      ae.store.assign_from(last_good);
      throw NumericError(fmt::format("autoencoder loss diverged at step {}; restored parameters from step {}", step,
                                     last_good.step));
    }
    neural::clip_grad_norm(ae.store, config.clip);
    neural::adam_step(ae.store, adam);
    running = step == 1 ? batch_loss : 0.98 * running + 0.02 * batch_loss;
    if (step % config.eval_every == 0 || step == config.steps) {
      last_good = ae.store;
      AutoencoderCurvePoint point{step, running, measure(ae, val_samples).mean_m};
      report.curve.push_back(point);
      log_line(log,
               fmt::format("autoencoder step {} loss {:.5f} val error {:.4f} m", step, running, point.val_error_m));
    }
  }

  // Standardize the latent with training statistics.
  const int dim = ae.latent_dim();
  Vec mean = Vec::Zero(dim), m2 = Vec::Zero(dim);
  for (const auto& s : samples) {
    const Vec z = ae.encode(s.deltas);
    mean += z;
    m2 += z.cwiseAbs2();
  }
  const double n = static_cast<double>(samples.size());
  mean /= n;
  const Vec var = (m2 / n - mean.cwiseAbs2()).cwiseMax(0.0);
  ae.set_latent_stats(mean, var.cwiseSqrt());
  report.val = measure(ae, val_samples);
  return report;
}

}  // namespace gmop::model
