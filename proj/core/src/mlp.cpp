#include "reachlab/mlp.hpp"

#include <cmath>
#include <sstream>

#include "reachlab/errors.hpp"

namespace reachlab {

MlpShape MlpShape::make(int in, std::span<const int> hidden, int out, Head head) {
  MlpShape s;
  s.head = head;
  s.widths.push_back(in);
  for (int h : hidden) s.widths.push_back(h);
  s.widths.push_back(head == Head::kGaussian ? 2 * out : out);
  for (int w : s.widths) {
    if (w <= 0) throw ShapeError("layer widths must be positive");
  }
  return s;
}

std::size_t MlpShape::param_count() const {
  std::size_t n = 0;
  for (int l = 0; l < layer_count(); ++l) {
    n += static_cast<std::size_t>(widths[l + 1]) * (widths[l] + 1);
  }
  return n;
}

std::size_t MlpShape::weight_offset(int layer) const {
  std::size_t n = 0;
  for (int l = 0; l < layer; ++l) {
    n += static_cast<std::size_t>(widths[l + 1]) * (widths[l] + 1);
  }
  return n;
}

std::size_t MlpShape::bias_offset(int layer) const {
  return weight_offset(layer) +
         static_cast<std::size_t>(widths[layer + 1]) * widths[layer];
}

template <typename T>
Eigen::Map<const Mat<T>> MlpView<T>::weight(int l) const {
  return Eigen::Map<const Mat<T>>(params_ + shape_->weight_offset(l),
                                  shape_->widths[l + 1], shape_->widths[l]);
}

template <typename T>
Eigen::Map<const Vec<T>> MlpView<T>::bias(int l) const {
  return Eigen::Map<const Vec<T>>(params_ + shape_->bias_offset(l),
                                  shape_->widths[l + 1]);
}

template <typename T>
void MlpView<T>::check_input(const Mat<T>& x) const {
  if (x.rows() != shape_->input_dim()) {
    std::ostringstream os;
    os << "input has " << x.rows() << " rows, network expects "
       << shape_->input_dim();
    throw ShapeError(os.str());
  }
}

template <typename T>
Mat<T> MlpView<T>::forward(const Mat<T>& x) const {
  check_input(x);
  const int layers = shape_->layer_count();
  Mat<T> h = x;
  Mat<T> z;
  for (int l = 0; l < layers; ++l) {
    z.noalias() = weight(l) * h;
    z.colwise() += bias(l);
    if (l + 1 < layers) {
      h = z.cwiseMax(T(0));
    }
  }
  if (shape_->head == Head::kGaussian) {
    const Eigen::Index d = z.rows() / 2;
    z.bottomRows(d) =
        z.bottomRows(d).cwiseMax(T(kLogStdMin)).cwiseMin(T(kLogStdMax));
  }
  return z;
}

template <typename T>
Mat<T> MlpView<T>::forward(const Mat<T>& x, Tape<T>& tape) const {
  check_input(x);
  const int layers = shape_->layer_count();
  tape.inputs.resize(layers);
  tape.pre.resize(layers);
  tape.inputs[0] = x;
  for (int l = 0; l < layers; ++l) {
    Mat<T>& z = tape.pre[l];
    z.noalias() = weight(l) * tape.inputs[l];
    z.colwise() += bias(l);
    if (l + 1 < layers) tape.inputs[l + 1] = z.cwiseMax(T(0));
  }
  Mat<T> out = tape.pre.back();
  if (shape_->head == Head::kGaussian) {
    const Eigen::Index d = out.rows() / 2;
    out.bottomRows(d) =
        out.bottomRows(d).cwiseMax(T(kLogStdMin)).cwiseMin(T(kLogStdMax));
  }
  return out;
}

template <typename T>
void MlpView<T>::backward(const Tape<T>& tape, const Mat<T>& d_out, T* grad,
                          Mat<T>* d_input, std::vector<Mat<T>>* deltas) const {
  if (!tape.recorded()) {
    throw Error("backward called without a recorded forward pass");
  }
  const int layers = shape_->layer_count();
  if (d_out.rows() != shape_->output_dim() || d_out.cols() != tape.batch()) {
    throw ShapeError("output cotangent shape does not match recorded pass");
  }
  Mat<T> delta = d_out;
  if (shape_->head == Head::kGaussian) {
    const Eigen::Index d = delta.rows() / 2;
    const auto raw = tape.pre.back().bottomRows(d).array();
    delta.bottomRows(d) =
        (raw >= T(kLogStdMin) && raw <= T(kLogStdMax))
            .select(delta.bottomRows(d).array(), T(0))
            .matrix();
  }
  if (deltas) deltas->resize(layers);
  for (int l = layers - 1; l >= 0; --l) {
    if (grad) {
      Eigen::Map<Mat<T>> gw(grad + shape_->weight_offset(l),
                            shape_->widths[l + 1], shape_->widths[l]);
      Eigen::Map<Vec<T>> gb(grad + shape_->bias_offset(l),
                            shape_->widths[l + 1]);
      gw.noalias() += delta * tape.inputs[l].transpose();
      gb += delta.rowwise().sum();
    }
    if (deltas) (*deltas)[l] = delta;
    if (l > 0) {
      Mat<T> dh = weight(l).transpose() * delta;
      delta = (tape.pre[l - 1].array() > T(0)).select(dh.array(), T(0)).matrix();
    } else if (d_input) {
      d_input->noalias() = weight(0).transpose() * delta;
    }
  }
}

template <typename T>
Mat<T> MlpView<T>::input_gradient(const Tape<T>& tape,
                                  std::vector<Mat<T>>& deltas) const {
  if (shape_->output_dim() != 1 || shape_->head != Head::kIdentity) {
    throw ShapeError("input_gradient requires a scalar identity-head network");
  }
  Mat<T> ones = Mat<T>::Ones(1, tape.batch());
  Mat<T> g;
  backward(tape, ones, nullptr, &g, &deltas);
  return g;
}

template <typename T>
void MlpView<T>::input_gradient_vjp(const Tape<T>& tape,
                                    const std::vector<Mat<T>>& deltas,
                                    const Mat<T>& c_input, T* grad) const {
  const int layers = shape_->layer_count();
  if (static_cast<int>(deltas.size()) != layers) {
    throw Error("input_gradient_vjp requires deltas from input_gradient");
  }
  if (c_input.rows() != shape_->input_dim() || c_input.cols() != tape.batch()) {
    throw ShapeError("input cotangent shape does not match recorded pass");
  }
  Mat<T> c = c_input;
  for (int l = 0; l < layers; ++l) {
    Eigen::Map<Mat<T>> gw(grad + shape_->weight_offset(l), shape_->widths[l + 1],
                          shape_->widths[l]);
    gw.noalias() += deltas[l] * c.transpose();
    if (l + 1 < layers) {
      Mat<T> next = weight(l) * c;
      c = (tape.pre[l].array() > T(0)).select(next.array(), T(0)).matrix();
    }
  }
}

template <typename T>
Mlp<T>::Mlp(MlpShape shape)
    : shape_(std::move(shape)),
      params_(Vec<T>::Zero(static_cast<Eigen::Index>(shape_.param_count()))) {}

namespace {

template <typename T>
void init_uniform(const MlpShape& shape, T* params, Rng& rng) {
  for (int l = 0; l < shape.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape.widths[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t begin = shape.weight_offset(l);
    const std::size_t end = shape.weight_offset(l + 1);
    for (std::size_t i = begin; i < end; ++i) params[i] = static_cast<T>(dist(rng));
  }
}

}  // namespace

template <typename T>
Mlp<T> Mlp<T>::random(MlpShape shape, Rng& rng) {
  Mlp<T> net(std::move(shape));
  init_uniform(net.shape_, net.params_.data(), rng);
  return net;
}

template <typename T>
void Mlp<T>::backward(const Tape<T>& tape, const Mat<T>& d_out, Vec<T>& grad,
                      Mat<T>* d_input) const {
  if (grad.size() != params_.size()) grad = Vec<T>::Zero(params_.size());
  view().backward(tape, d_out, grad.data(), d_input);
}

template <typename T>
MlpEnsemble<T>::MlpEnsemble(MlpShape shape, int members) : shape_(std::move(shape)) {
  if (members < 1) throw ShapeError("ensemble needs at least one member");
  params_ = Mat<T>::Zero(static_cast<Eigen::Index>(shape_.param_count()), members);
}

template <typename T>
MlpEnsemble<T> MlpEnsemble<T>::random(MlpShape shape, int members, Rng& rng) {
  MlpEnsemble<T> e(std::move(shape), members);
  for (int i = 0; i < members; ++i) init_uniform(e.shape_, e.member_data(i), rng);
  return e;
}

template <typename T>
MlpEnsemble<T> MlpEnsemble<T>::replicate(const Mlp<T>& net, int members) {
  MlpEnsemble<T> e(net.shape(), members);
  for (int i = 0; i < members; ++i) e.params_.col(i) = net.params();
  return e;
}

template <typename T>
std::vector<Mat<T>> MlpEnsemble<T>::forward_all(const Mat<T>& x) const {
  std::vector<Mat<T>> out;
  out.reserve(static_cast<std::size_t>(size()));
  for (int i = 0; i < size(); ++i) out.push_back(member(i).forward(x));
  return out;
}

template class MlpView<float>;
template class MlpView<double>;
template class Mlp<float>;
template class Mlp<double>;
template class MlpEnsemble<float>;
template class MlpEnsemble<double>;

}  // namespace reachlab
