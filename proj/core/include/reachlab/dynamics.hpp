#ifndef REACHLAB_DYNAMICS_HPP_
#define REACHLAB_DYNAMICS_HPP_

#include <array>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "reachlab/env2d.hpp"
#include "reachlab/mlp.hpp"
#include "reachlab/transition.hpp"

namespace reachlab {

// Inputs are (x, y, dx, dy); outputs are (delta x, delta y, reward).
inline constexpr int kModelInputDim = 4;
inline constexpr int kModelOutputDim = 3;

using ModelVec = std::array<double, kModelOutputDim>;

struct EnsembleTrainConfig {
  int members = 7;
  int elites = 5;
  std::vector<int> hidden{128, 128};
  int steps = 4000;
  // The first `mean_warmup_steps` of `steps` fit only the means by squared
  // error; the rest maximize likelihood.
  int mean_warmup_steps = 3000;
  int batch_size = 256;
  double lr = 1e-3;
  double holdout_fraction = 0.1;
  bool bootstrap = true;
  // Members are independent, so they may be fitted on separate threads.
  int threads = 1;

  void validate() const;
  friend bool operator==(const EnsembleTrainConfig&, const EnsembleTrainConfig&) = default;
};

struct EnsembleTrainReport {
  std::vector<double> initial_holdout_nll;
  std::vector<double> final_holdout_nll;
  std::vector<double> final_holdout_mse;  // mean-prediction MSE, all outputs
  int train_size = 0;
  int holdout_size = 0;
};

class GaussianEnsemble {
 public:
  GaussianEnsemble() = default;
  GaussianEnsemble(MlpEnsemble<float> nets, std::vector<int> elites,
                   Vec<float> input_shift, Vec<float> input_scale);

  int size() const { return nets_.size(); }
  const std::vector<int>& elites() const { return elites_; }
  const MlpEnsemble<float>& nets() const { return nets_; }
  MlpEnsemble<float>& nets() { return nets_; }
  const Vec<float>& input_shift() const { return shift_; }
  const Vec<float>& input_scale() const { return scale_; }
  EnsembleTrainReport& report() { return report_; }
  const EnsembleTrainReport& report() const { return report_; }

  // Raw (x, y, dx, dy) columns to network inputs.
  Mat<float> normalize(const Mat<float>& raw) const;
  // Network output (2 * kModelOutputDim x batch) for one member.
  Mat<float> member_output(int member, const Mat<float>& raw) const;

  struct Moments {
    std::vector<ModelVec> mean;  // one entry per member
    std::vector<ModelVec> std;
  };
  Moments moments(State2 s, Action2 a) const;

 private:
  MlpEnsemble<float> nets_;
  std::vector<int> elites_;
  Vec<float> shift_;
  Vec<float> scale_;
  EnsembleTrainReport report_;
};

Mat<float> model_inputs(std::span<const Transition> data);
Mat<float> model_targets(std::span<const Transition> data);

// Fits one Gaussian-head member by minibatch NLL on the given sample indices
// (drawn with replacement from `rows`). Exposed for determinism tests.
void fit_member(Mlp<float>& net, const Mat<float>& inputs, const Mat<float>& targets,
                std::span<const int> rows, const EnsembleTrainConfig& cfg, Rng& rng);

GaussianEnsemble train_ensemble(std::span<const Transition> data,
                                const EnsembleTrainConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------

struct ModelOutput {
  State2 next;
  double reward = 0.0;
};

class DynamicsModel {
 public:
  enum class Kind { kTrue, kLearned, kRandom, kInterpolated };

  static DynamicsModel true_model(EnvSpec env);
  static DynamicsModel learned(EnvSpec env, std::shared_ptr<const GaussianEnsemble> ens,
                               bool sample_noise = false);
  // A fixed randomly-initialized network mapping (s, a) to (delta s, r).
  static DynamicsModel random(EnvSpec env, std::span<const int> hidden, Rng& rng);
  static DynamicsModel interpolated(DynamicsModel base, DynamicsModel target,
                                    double alpha);

  Kind kind() const;
  const EnvSpec& env() const { return env_; }
  double alpha() const;
  const DynamicsModel& base() const;
  const DynamicsModel& target() const;
  const GaussianEnsemble& ensemble() const;
  bool sample_noise() const;
  const Mlp<float>& random_net() const;

  ModelOutput predict(State2 s, Action2 a, Rng& rng) const;

 private:
  struct TrueDyn {};
  struct LearnedDyn {
    std::shared_ptr<const GaussianEnsemble> ensemble;
    bool sample_noise = false;
  };
  struct RandomDyn {
    std::shared_ptr<const Mlp<float>> net;
  };
  struct InterpDyn {
    std::shared_ptr<const DynamicsModel> base;
    std::shared_ptr<const DynamicsModel> target;
    double alpha = 0.0;
  };

  DynamicsModel(EnvSpec env, std::variant<TrueDyn, LearnedDyn, RandomDyn, InterpDyn> v)
      : env_(std::move(env)), v_(std::move(v)) {}

  EnvSpec env_;
  std::variant<TrueDyn, LearnedDyn, RandomDyn, InterpDyn> v_;
};

const char* kind_name(DynamicsModel::Kind kind);

inline ModelOutput predict(const DynamicsModel& model, State2 s, Action2 a, Rng& rng) {
  return model.predict(s, a, rng);
}

// ---------------------------------------------------------------------------

enum class PenaltyTag { kNone, kMopo, kMorel, kMobile };

struct PenaltyKind {
  PenaltyTag tag = PenaltyTag::kNone;
  double weight = 0.0;

  void validate() const;
  friend bool operator==(const PenaltyKind&, const PenaltyKind&) = default;
};

const char* penalty_name(PenaltyTag tag);
PenaltyTag penalty_from_name(const std::string& name);

// Per-member statistics to scalar, for each penalty form.
double mopo_penalty(std::span<const ModelVec> member_std);
double morel_penalty(std::span<const ModelVec> member_mean);
double mobile_penalty(std::span<const ModelVec> member_mean);

double penalty(PenaltyTag tag, const GaussianEnsemble& ensemble, State2 s, Action2 a);
// Learned models use their ensemble; interpolations weight each learned
// endpoint by its share. True and Random models have no epistemic estimate.
double penalty(PenaltyTag tag, const DynamicsModel& model, State2 s, Action2 a);

struct PenalizedOutput {
  State2 next;
  double reward = 0.0;       // model reward minus weight * penalty
  double model_reward = 0.0;
  double penalty = 0.0;
};

PenalizedOutput penalized_reward(const DynamicsModel& model, const PenaltyKind& kind,
                                 State2 s, Action2 a, Rng& rng);

}  // namespace reachlab

#endif  // REACHLAB_DYNAMICS_HPP_
