#ifndef REACHLAB_MLP_HPP_
#define REACHLAB_MLP_HPP_

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "reachlab/rng.hpp"

namespace reachlab {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

enum class Head {
  kIdentity,
  // Output rows [0, d) are means, rows [d, 2d) are log-stds clamped to
  // [kLogStdMin, kLogStdMax].
  kGaussian,
};

// Layer widths including input and output. Parameters are laid out layer by
// layer as a column-major weight (out x in) followed by the bias (out).
struct MlpShape {
  std::vector<int> widths;
  Head head = Head::kIdentity;

  // For a Gaussian head `out` is the distribution dimension; the final layer
  // then has 2 * out units.
  static MlpShape make(int in, std::span<const int> hidden, int out,
                       Head head = Head::kIdentity);

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  std::size_t param_count() const;
  std::size_t weight_offset(int layer) const;
  std::size_t bias_offset(int layer) const;

  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

// Activations recorded by a forward pass; consumed by backward().
template <typename T>
struct Tape {
  std::vector<Mat<T>> inputs;  // input to each layer
  std::vector<Mat<T>> pre;     // pre-activation of each layer (raw output last)
  bool recorded() const { return !inputs.empty(); }
  Eigen::Index batch() const { return inputs.empty() ? 0 : inputs[0].cols(); }
};

// Non-owning view of one network's parameters. All compute lives here so that
// standalone networks and stacked ensembles share a single code path. Batches
// are column-major: one sample per column.
template <typename T>
class MlpView {
 public:
  MlpView(const MlpShape& shape, const T* params)
      : shape_(&shape), params_(params) {}

  const MlpShape& shape() const { return *shape_; }
  const T* data() const { return params_; }

  Mat<T> forward(const Mat<T>& x) const;
  Mat<T> forward(const Mat<T>& x, Tape<T>& tape) const;

  // Reverse pass for the cotangent `d_out` of the (clamped) output. Parameter
  // gradients are accumulated into `grad` when non-null. `deltas`, when
  // requested, receives the cotangent at each layer's pre-activation.
  void backward(const Tape<T>& tape, const Mat<T>& d_out, T* grad,
                Mat<T>* d_input = nullptr,
                std::vector<Mat<T>>* deltas = nullptr) const;

  // Gradient of a scalar-output network w.r.t. its input, one column per
  // sample. Fills `deltas` for input_gradient_vjp().
  Mat<T> input_gradient(const Tape<T>& tape, std::vector<Mat<T>>& deltas) const;

  // Accumulates d<c, dnet/dinput>/dparams into `grad`. ReLU networks are
  // piecewise linear, so the input gradient is linear in the weights between
  // activation-pattern changes and the bias gradient is zero.
  void input_gradient_vjp(const Tape<T>& tape, const std::vector<Mat<T>>& deltas,
                          const Mat<T>& c_input, T* grad) const;

 private:
  Eigen::Map<const Mat<T>> weight(int l) const;
  Eigen::Map<const Vec<T>> bias(int l) const;
  void check_input(const Mat<T>& x) const;

  const MlpShape* shape_;
  const T* params_;
};

template <typename T>
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpShape shape);

  // Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Mlp random(MlpShape shape, Rng& rng);

  const MlpShape& shape() const { return shape_; }
  MlpView<T> view() const { return MlpView<T>(shape_, params_.data()); }
  Vec<T>& params() { return params_; }
  const Vec<T>& params() const { return params_; }

  Mat<T> forward(const Mat<T>& x) const { return view().forward(x); }
  Mat<T> forward(const Mat<T>& x, Tape<T>& tape) const {
    return view().forward(x, tape);
  }
  void backward(const Tape<T>& tape, const Mat<T>& d_out, Vec<T>& grad,
                Mat<T>* d_input = nullptr) const;

  template <typename U>
  Mlp<U> cast() const {
    Mlp<U> out(shape_);
    out.params() = params_.template cast<U>();
    return out;
  }

 private:
  MlpShape shape_;
  Vec<T> params_;
};

// N networks of identical shape stored as one stacked parameter matrix
// (param_count x members), so ensemble-wide operations touch one buffer.
template <typename T>
class MlpEnsemble {
 public:
  MlpEnsemble() = default;
  MlpEnsemble(MlpShape shape, int members);

  static MlpEnsemble random(MlpShape shape, int members, Rng& rng);
  // Every member a copy of `net`.
  static MlpEnsemble replicate(const Mlp<T>& net, int members);

  int size() const { return static_cast<int>(params_.cols()); }
  const MlpShape& shape() const { return shape_; }
  MlpView<T> member(int i) const {
    return MlpView<T>(shape_, params_.col(i).data());
  }
  T* member_data(int i) { return params_.col(i).data(); }
  Mat<T>& params() { return params_; }
  const Mat<T>& params() const { return params_; }

  // Evaluates every member on a shared input.
  std::vector<Mat<T>> forward_all(const Mat<T>& x) const;

  template <typename U>
  MlpEnsemble<U> cast() const {
    MlpEnsemble<U> out(shape_, size());
    out.params() = params_.template cast<U>();
    return out;
  }

 private:
  MlpShape shape_;
  Mat<T> params_;
};

extern template class MlpView<float>;
extern template class MlpView<double>;
extern template class Mlp<float>;
extern template class Mlp<double>;
extern template class MlpEnsemble<float>;
extern template class MlpEnsemble<double>;

}  // namespace reachlab

#endif  // REACHLAB_MLP_HPP_
