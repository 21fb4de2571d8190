#include "reachlab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "reachlab/adam.hpp"
#include "reachlab/errors.hpp"
#include "reachlab/losses.hpp"

namespace reachlab {

void EnsembleTrainConfig::validate() const {
  std::vector<std::string> bad;
  if (members < 2) bad.push_back("model.members: must be >= 2");
  if (elites < 1 || elites > members) {
    bad.push_back("model.elites: must lie in [1, model.members]");
  }
  for (int w : hidden) {
    if (w < 1) {
      bad.push_back("model.hidden: widths must be positive");
      break;
    }
  }
  if (steps < 0) bad.push_back("model.steps: must be >= 0");
  if (mean_warmup_steps < 0 || mean_warmup_steps > steps) {
    bad.push_back("model.mean_warmup_steps: must lie in [0, model.steps]");
  }
  if (batch_size < 1) bad.push_back("model.batch_size: must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) bad.push_back("model.lr: must be finite and > 0");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    bad.push_back("model.holdout_fraction: must lie in [0, 1)");
  }
  if (threads < 1) bad.push_back("model.threads: must be >= 1");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

GaussianEnsemble::GaussianEnsemble(MlpEnsemble<float> nets, std::vector<int> elites,
                                   Vec<float> input_shift, Vec<float> input_scale)
    : nets_(std::move(nets)),
      elites_(std::move(elites)),
      shift_(std::move(input_shift)),
      scale_(std::move(input_scale)) {
  const MlpShape& shape = nets_.shape();
  if (nets_.size() < 2) throw ShapeError("a Gaussian ensemble needs >= 2 members");
  if (shape.head != Head::kGaussian || shape.input_dim() != kModelInputDim ||
      shape.output_dim() != 2 * kModelOutputDim) {
    throw ShapeError("ensemble members must map 4 inputs to a 3-d Gaussian");
  }
  if (shift_.size() != kModelInputDim || scale_.size() != kModelInputDim) {
    throw ShapeError("input normalizer must have 4 entries");
  }
  if (elites_.empty()) throw ShapeError("ensemble needs at least one elite");
  for (int e : elites_) {
    if (e < 0 || e >= nets_.size()) throw ShapeError("elite index out of range");
  }
}

Mat<float> GaussianEnsemble::normalize(const Mat<float>& raw) const {
  if (raw.rows() != kModelInputDim) throw ShapeError("model input must have 4 rows");
  return ((raw.colwise() - shift_).array().colwise() / scale_.array()).matrix();
}

Mat<float> GaussianEnsemble::member_output(int member, const Mat<float>& raw) const {
  return nets_.member(member).forward(normalize(raw));
}

GaussianEnsemble::Moments GaussianEnsemble::moments(State2 s, Action2 a) const {
  Mat<float> raw(kModelInputDim, 1);
  raw << static_cast<float>(s.x), static_cast<float>(s.y), static_cast<float>(a.dx),
      static_cast<float>(a.dy);
  const Mat<float> x = normalize(raw);
  Moments m;
  m.mean.resize(static_cast<std::size_t>(size()));
  m.std.resize(static_cast<std::size_t>(size()));
  for (int i = 0; i < size(); ++i) {
    const Mat<float> out = nets_.member(i).forward(x);
    for (int d = 0; d < kModelOutputDim; ++d) {
      m.mean[i][d] = out(d, 0);
      m.std[i][d] = std::exp(static_cast<double>(out(kModelOutputDim + d, 0)));
    }
  }
  return m;
}

Mat<float> model_inputs(std::span<const Transition> data) {
  Mat<float> x(kModelInputDim, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Transition& t = data[i];
    x.col(static_cast<Eigen::Index>(i)) << static_cast<float>(t.s.x),
        static_cast<float>(t.s.y), static_cast<float>(t.a.dx), static_cast<float>(t.a.dy);
  }
  return x;
}

Mat<float> model_targets(std::span<const Transition> data) {
  Mat<float> y(kModelOutputDim, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Transition& t = data[i];
    y.col(static_cast<Eigen::Index>(i)) << static_cast<float>(t.s_next.x - t.s.x),
        static_cast<float>(t.s_next.y - t.s.y), static_cast<float>(t.r);
  }
  return y;
}

namespace {

Mat<float> gather(const Mat<float>& m, std::span<const int> cols) {
  Mat<float> out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = m.col(cols[i]);
  }
  return out;
}

struct HoldoutStats {
  double nll = 0.0;
  double mse = 0.0;
};

HoldoutStats holdout_stats(const MlpView<float>& net, const Mat<float>& x,
                           const Mat<float>& y) {
  HoldoutStats s;
  s.nll = gaussian_nll<float>(net, x, y, nullptr);
  const Mat<float> out = net.forward(x);
  s.mse = (out.topRows(kModelOutputDim) - y).squaredNorm() /
          static_cast<double>(y.size());
  return s;
}

}  // namespace

void fit_member(Mlp<float>& net, const Mat<float>& inputs, const Mat<float>& targets,
                std::span<const int> rows, const EnsembleTrainConfig& cfg, Rng& rng) {
  if (rows.empty()) throw Error("fit_member: no training rows");
  Adam<float> opt(static_cast<Eigen::Index>(net.params().size()), AdamConfig{cfg.lr});
  Vec<float> grad(net.params().size());
  std::vector<int> batch(static_cast<std::size_t>(cfg.batch_size));
  for (int step = 0; step < cfg.steps; ++step) {
    for (int& b : batch) b = rows[uniform_index(rng, rows.size())];
    const Mat<float> x = gather(inputs, batch);
    const Mat<float> y = gather(targets, batch);
    grad.setZero();
    const float loss = step < cfg.mean_warmup_steps
                           ? gaussian_mean_mse<float>(net.view(), x, y, grad.data())
                           : gaussian_nll<float>(net.view(), x, y, grad.data());
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "dynamics loss became non-finite at step " << step << " (loss " << loss
         << ", parameter norm " << net.params().norm() << ")";
      throw NonFiniteError(os.str());
    }
    opt.step(net.params(), grad, "dynamics member");
  }
}

GaussianEnsemble train_ensemble(std::span<const Transition> data,
                                const EnsembleTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (data.empty()) throw Error("train_ensemble: empty dataset");
  const Mat<float> raw_x = model_inputs(data);
  const Mat<float> y = model_targets(data);
  const int n = static_cast<int>(data.size());

  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  int n_hold = static_cast<int>(std::floor(cfg.holdout_fraction * n));
  if (n - n_hold < 1) n_hold = 0;
  std::vector<int> train(perm.begin() + n_hold, perm.end());
  std::vector<int> hold(perm.begin(), perm.begin() + n_hold);
  if (hold.empty()) hold = train;

  Vec<float> shift = Vec<float>::Zero(kModelInputDim);
  Vec<float> scale = Vec<float>::Ones(kModelInputDim);
  {
    Vec<double> sum = Vec<double>::Zero(kModelInputDim);
    Vec<double> sq = Vec<double>::Zero(kModelInputDim);
    for (int i : train) {
      const Vec<double> c = raw_x.col(i).cast<double>();
      sum += c;
      sq += c.cwiseAbs2();
    }
    const double m = static_cast<double>(train.size());
    for (int d = 0; d < kModelInputDim; ++d) {
      const double mean = sum(d) / m;
      const double var = std::max(0.0, sq(d) / m - mean * mean);
      shift(d) = static_cast<float>(mean);
      scale(d) = var > 1e-12 ? static_cast<float>(std::sqrt(var)) : 1.0f;
    }
  }
  const Mat<float> x =
      ((raw_x.colwise() - shift).array().colwise() / scale.array()).matrix();
  const Mat<float> x_hold = gather(x, hold);
  const Mat<float> y_hold = gather(y, hold);

  const MlpShape shape =
      MlpShape::make(kModelInputDim, cfg.hidden, kModelOutputDim, Head::kGaussian);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg.members));
  for (auto& s : seeds) s = rng();

  std::vector<Mlp<float>> nets(static_cast<std::size_t>(cfg.members));
  EnsembleTrainReport report;
  report.train_size = static_cast<int>(train.size());
  report.holdout_size = n_hold;
  report.initial_holdout_nll.resize(nets.size());
  report.final_holdout_nll.resize(nets.size());
  report.final_holdout_mse.resize(nets.size());

  auto fit = [&](int i) {
    Rng member_rng(seeds[i]);
    nets[i] = Mlp<float>::random(shape, member_rng);
    std::vector<int> rows = train;
    if (cfg.bootstrap) {
      for (int& r : rows) r = train[uniform_index(member_rng, train.size())];
    }
    report.initial_holdout_nll[i] = holdout_stats(nets[i].view(), x_hold, y_hold).nll;
    fit_member(nets[i], x, y, rows, cfg, member_rng);
    const HoldoutStats fin = holdout_stats(nets[i].view(), x_hold, y_hold);
    report.final_holdout_nll[i] = fin.nll;
    report.final_holdout_mse[i] = fin.mse;
  };

  const int workers = std::min(cfg.threads, cfg.members);
  if (workers <= 1) {
    for (int i = 0; i < cfg.members; ++i) fit(i);
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.members));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int i = w; i < cfg.members; i += workers) {
          try {
            fit(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  MlpEnsemble<float> stacked(shape, cfg.members);
  for (int i = 0; i < cfg.members; ++i) stacked.params().col(i) = nets[i].params();

  std::vector<int> order(static_cast<std::size_t>(cfg.members));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return report.final_holdout_nll[a] < report.final_holdout_nll[b];
  });
  std::vector<int> elites(order.begin(), order.begin() + cfg.elites);
  std::sort(elites.begin(), elites.end());

  GaussianEnsemble ens(std::move(stacked), std::move(elites), shift, scale);
  ens.report() = std::move(report);
  return ens;
}

// ---------------------------------------------------------------------------

DynamicsModel DynamicsModel::true_model(EnvSpec env) {
  return DynamicsModel(std::move(env), TrueDyn{});
}

DynamicsModel DynamicsModel::learned(EnvSpec env,
                                     std::shared_ptr<const GaussianEnsemble> ens,
                                     bool sample_noise) {
  if (!ens) throw Error("learned model requires an ensemble");
  return DynamicsModel(std::move(env), LearnedDyn{std::move(ens), sample_noise});
}

DynamicsModel DynamicsModel::random(EnvSpec env, std::span<const int> hidden, Rng& rng) {
  auto net = std::make_shared<const Mlp<float>>(Mlp<float>::random(
      MlpShape::make(kModelInputDim, hidden, kModelOutputDim), rng));
  return DynamicsModel(std::move(env), RandomDyn{std::move(net)});
}

DynamicsModel DynamicsModel::interpolated(DynamicsModel base, DynamicsModel target,
                                          double alpha) {
  std::vector<std::string> bad;
  if (!(alpha >= 0.0 && alpha <= 1.0)) bad.push_back("model.alpha: must lie in [0, 1]");
  if (base.kind() == target.kind()) {
    bad.push_back("model.interpolate: endpoints must be distinct model variants");
  }
  if (!bad.empty()) throw ConfigError(std::move(bad));
  EnvSpec env = base.env();
  return DynamicsModel(
      std::move(env),
      InterpDyn{std::make_shared<const DynamicsModel>(std::move(base)),
                std::make_shared<const DynamicsModel>(std::move(target)), alpha});
}

DynamicsModel::Kind DynamicsModel::kind() const {
  switch (v_.index()) {
    case 0:
      return Kind::kTrue;
    case 1:
      return Kind::kLearned;
    case 2:
      return Kind::kRandom;
    default:
      return Kind::kInterpolated;
  }
}

const char* kind_name(DynamicsModel::Kind kind) {
  switch (kind) {
    case DynamicsModel::Kind::kTrue:
      return "true";
    case DynamicsModel::Kind::kLearned:
      return "learned";
    case DynamicsModel::Kind::kRandom:
      return "random";
    case DynamicsModel::Kind::kInterpolated:
      return "interpolated";
  }
  return "?";
}

double DynamicsModel::alpha() const {
  const auto* p = std::get_if<InterpDyn>(&v_);
  if (!p) throw UnsupportedVariant("alpha() requires an interpolated model");
  return p->alpha;
}

const DynamicsModel& DynamicsModel::base() const {
  const auto* p = std::get_if<InterpDyn>(&v_);
  if (!p) throw UnsupportedVariant("base() requires an interpolated model");
  return *p->base;
}

const DynamicsModel& DynamicsModel::target() const {
  const auto* p = std::get_if<InterpDyn>(&v_);
  if (!p) throw UnsupportedVariant("target() requires an interpolated model");
  return *p->target;
}

const GaussianEnsemble& DynamicsModel::ensemble() const {
  const auto* p = std::get_if<LearnedDyn>(&v_);
  if (!p) throw UnsupportedVariant("ensemble() requires a learned model");
  return *p->ensemble;
}

bool DynamicsModel::sample_noise() const {
  const auto* p = std::get_if<LearnedDyn>(&v_);
  return p && p->sample_noise;
}

const Mlp<float>& DynamicsModel::random_net() const {
  const auto* p = std::get_if<RandomDyn>(&v_);
  if (!p) throw UnsupportedVariant("random_net() requires a random model");
  return *p->net;
}

ModelOutput DynamicsModel::predict(State2 s, Action2 a, Rng& rng) const {
  check_action(a, env_.a_max);
  if (std::holds_alternative<TrueDyn>(v_)) {
    const StepResult r = step(env_, s, a);
    return {r.next, r.reward};
  }
  if (const auto* l = std::get_if<LearnedDyn>(&v_)) {
    const GaussianEnsemble& ens = *l->ensemble;
    const int member = ens.elites()[uniform_index(rng, ens.elites().size())];
    Mat<float> raw(kModelInputDim, 1);
    raw << static_cast<float>(s.x), static_cast<float>(s.y),
        static_cast<float>(a.dx), static_cast<float>(a.dy);
    const Mat<float> out = ens.member_output(member, raw);
    ModelVec v{out(0, 0), out(1, 0), out(2, 0)};
    if (l->sample_noise) {
      for (int d = 0; d < kModelOutputDim; ++d) {
        v[d] += std::exp(static_cast<double>(out(kModelOutputDim + d, 0))) *
                standard_normal(rng);
      }
    }
    return {{s.x + v[0], s.y + v[1]}, v[2]};
  }
  if (const auto* r = std::get_if<RandomDyn>(&v_)) {
    Mat<float> raw(kModelInputDim, 1);
    raw << static_cast<float>(s.x), static_cast<float>(s.y),
        static_cast<float>(a.dx), static_cast<float>(a.dy);
    const Mat<float> out = r->net->forward(raw);
    return {{s.x + out(0, 0), s.y + out(1, 0)}, out(2, 0)};
  }
  const auto& in = std::get<InterpDyn>(v_);
  Rng shared = rng;
  const ModelOutput b = in.base->predict(s, a, shared);
  const ModelOutput t = in.target->predict(s, a, rng);
  if (in.alpha == 0.0) return b;
  if (in.alpha == 1.0) return t;
  const double w = 1.0 - in.alpha;
  return {{w * b.next.x + in.alpha * t.next.x, w * b.next.y + in.alpha * t.next.y},
          w * b.reward + in.alpha * t.reward};
}

// ---------------------------------------------------------------------------

void PenaltyKind::validate() const {
  if (!std::isfinite(weight) || weight < 0.0) {
    throw ConfigError({"penalty.weight: must be finite and >= 0"});
  }
}

const char* penalty_name(PenaltyTag tag) {
  switch (tag) {
    case PenaltyTag::kNone:
      return "none";
    case PenaltyTag::kMopo:
      return "mopo";
    case PenaltyTag::kMorel:
      return "morel";
    case PenaltyTag::kMobile:
      return "mobile";
  }
  return "?";
}

PenaltyTag penalty_from_name(const std::string& name) {
  if (name == "none") return PenaltyTag::kNone;
  if (name == "mopo") return PenaltyTag::kMopo;
  if (name == "morel") return PenaltyTag::kMorel;
  if (name == "mobile") return PenaltyTag::kMobile;
  throw ConfigError({"penalty.kind: unknown penalty '" + name +
                     "' (expected none, mopo, morel, mobile)"});
}

double mopo_penalty(std::span<const ModelVec> member_std) {
  double best = 0.0;
  for (const ModelVec& s : member_std) {
    double sq = 0.0;
    for (double v : s) sq += v * v;
    best = std::max(best, std::sqrt(sq));
  }
  return best;
}

double morel_penalty(std::span<const ModelVec> member_mean) {
  double best = 0.0;
  for (std::size_t i = 0; i < member_mean.size(); ++i) {
    for (std::size_t j = i + 1; j < member_mean.size(); ++j) {
      double sq = 0.0;
      for (int d = 0; d < kModelOutputDim; ++d) {
        const double diff = member_mean[i][d] - member_mean[j][d];
        sq += diff * diff;
      }
      best = std::max(best, std::sqrt(sq));
    }
  }
  return best;
}

double mobile_penalty(std::span<const ModelVec> member_mean) {
  // Population variance via pairwise differences: identical members give an
  // exact zero, which a mean-subtraction formula does not guarantee.
  const double n = static_cast<double>(member_mean.size());
  if (member_mean.empty()) return 0.0;
  double total = 0.0;
  for (int d = 0; d < kModelOutputDim; ++d) {
    double sq = 0.0;
    for (std::size_t i = 0; i < member_mean.size(); ++i) {
      for (std::size_t j = i + 1; j < member_mean.size(); ++j) {
        const double diff = member_mean[i][d] - member_mean[j][d];
        sq += diff * diff;
      }
    }
    total += sq / (n * n);
  }
  return std::sqrt(total);
}

double penalty(PenaltyTag tag, const GaussianEnsemble& ensemble, State2 s, Action2 a) {
  if (tag == PenaltyTag::kNone) return 0.0;
  const GaussianEnsemble::Moments m = ensemble.moments(s, a);
  switch (tag) {
    case PenaltyTag::kMopo:
      return mopo_penalty(m.std);
    case PenaltyTag::kMorel:
      return morel_penalty(m.mean);
    case PenaltyTag::kMobile:
      return mobile_penalty(m.mean);
    case PenaltyTag::kNone:
      break;
  }
  return 0.0;
}

namespace {

double endpoint_penalty(PenaltyTag tag, const DynamicsModel& model, State2 s, Action2 a) {
  switch (model.kind()) {
    case DynamicsModel::Kind::kLearned:
      return penalty(tag, model.ensemble(), s, a);
    case DynamicsModel::Kind::kInterpolated: {
      const double alpha = model.alpha();
      double p = 0.0;
      if (alpha < 1.0) p += (1.0 - alpha) * endpoint_penalty(tag, model.base(), s, a);
      if (alpha > 0.0) p += alpha * endpoint_penalty(tag, model.target(), s, a);
      return p;
    }
    default:
      return 0.0;
  }
}

}  // namespace

double penalty(PenaltyTag tag, const DynamicsModel& model, State2 s, Action2 a) {
  const auto kind = model.kind();
  if (kind == DynamicsModel::Kind::kTrue || kind == DynamicsModel::Kind::kRandom) {
    throw UnsupportedVariant(std::string("penalty is undefined for the ") +
                             kind_name(kind) + " model");
  }
  return endpoint_penalty(tag, model, s, a);
}

PenalizedOutput penalized_reward(const DynamicsModel& model, const PenaltyKind& kind,
                                 State2 s, Action2 a, Rng& rng) {
  const ModelOutput out = model.predict(s, a, rng);
  PenalizedOutput p;
  p.next = out.next;
  p.model_reward = out.reward;
  p.reward = out.reward;
  if (kind.tag == PenaltyTag::kNone || model.kind() == DynamicsModel::Kind::kTrue) {
    return p;
  }
  p.penalty = penalty(kind.tag, model, s, a);
  if (kind.weight != 0.0) p.reward = out.reward - kind.weight * p.penalty;
  return p;
}

}  // namespace reachlab
