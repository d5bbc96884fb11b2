#include "bank.hpp"

#include <cmath>
#include <random>

#include "common.hpp"

namespace mproto {

namespace {

constexpr double kNormFloor = 1e-12;

void check_weights(const std::vector<double>& w, std::size_t n) {
  if (w.size() != n) throw contract_error("weights length does not match token count");
  for (double v : w)
    if (v != 0.0 && v != 1.0) throw contract_error("weights must be exactly 0 or 1");
}

void check_assigned(const std::vector<int>& assigned, std::size_t n, int flat_count) {
  if (assigned.size() != n) throw contract_error("assignment length does not match token count");
  for (int a : assigned)
    if (a < 0 || a >= flat_count) throw contract_error("assigned prototype index out of range");
}

}  // namespace

PrototypeBank PrototypeBank::random_init(const std::vector<std::string>& class_names,
                                         int per_class, int dim, double ema_ratio,
                                         std::uint64_t seed) {
  if (class_names.size() < 2) throw input_error("bank needs the O class plus at least one entity class");
  if (per_class < 1) throw input_error("bank needs at least one prototype per class");
  if (dim < 1) throw input_error("bank dimension must be positive");
  if (ema_ratio < 0.0 || ema_ratio >= 1.0) throw input_error("ema_ratio must be in [0,1)");

  PrototypeBank bank;
  bank.num_classes = static_cast<int>(class_names.size());
  bank.per_class = per_class;
  bank.dim = dim;
  bank.ema_ratio = ema_ratio;
  bank.class_names = class_names;
  bank.vectors.resize(bank.flat_count(), dim);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index r = 0; r < bank.vectors.rows(); ++r) {
    double norm = 0.0;
    do {
      for (Eigen::Index c = 0; c < dim; ++c) bank.vectors(r, c) = gauss(rng);
      norm = bank.vectors.row(r).norm();
    } while (norm < kNormFloor);
    bank.vectors.row(r) /= norm;
  }
  return bank;
}

void PrototypeBank::validate() const {
  if (num_classes < 2 || per_class < 1 || dim < 1)
    throw contract_error("prototype bank has invalid shape");
  if (static_cast<int>(class_names.size()) != num_classes)
    throw contract_error("prototype bank class name count mismatch");
  if (vectors.rows() != flat_count() || vectors.cols() != dim)
    throw contract_error("prototype bank vector shape mismatch");
  if (!vectors.allFinite()) throw contract_error("prototype bank has non-finite entries");
  for (Eigen::Index r = 0; r < vectors.rows(); ++r)
    if (vectors.row(r).norm() < kNormFloor)
      throw contract_error("prototype bank has a zero-norm prototype");
}

Eigen::MatrixXd similarity(const Eigen::MatrixXd& features, const PrototypeBank& bank) {
  bank.validate();
  if (features.cols() != bank.dim)
    throw contract_error("feature dimension does not match prototype bank");
  Eigen::VectorXd fnorm = features.rowwise().norm();
  for (Eigen::Index i = 0; i < fnorm.size(); ++i)
    if (fnorm[i] < kNormFloor)
      throw input_error("token " + std::to_string(i) + " has a zero-norm feature vector");
  Eigen::MatrixXd pn = bank.vectors;
  for (Eigen::Index r = 0; r < pn.rows(); ++r) pn.row(r) /= pn.row(r).norm();
  Eigen::MatrixXd sim = features * pn.transpose();
  sim.array().colwise() /= fnorm.array();
  // rounding can push |cos| a hair past 1; the invariant is [-1, 1]
  return sim.cwiseMax(-1.0).cwiseMin(1.0);
}

std::vector<int> classify(const Eigen::MatrixXd& sim, int per_class) {
  if (sim.rows() < 1 || sim.cols() < 1) throw contract_error("classify: empty similarity matrix");
  if (per_class < 1 || sim.cols() % per_class != 0)
    throw contract_error("classify: column count not divisible by prototypes per class");
  std::vector<int> out(static_cast<std::size_t>(sim.rows()));
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    int best = 0;
    double best_val = sim(i, 0);
    for (Eigen::Index j = 1; j < sim.cols(); ++j) {
      if (sim(i, j) > best_val) {
        best_val = sim(i, j);
        best = static_cast<int>(j);
      }
    }
    out[static_cast<std::size_t>(i)] = best / per_class;
  }
  return out;
}

LossValue ce_loss(const Eigen::MatrixXd& sim, const std::vector<int>& assigned,
                  const std::vector<double>& weights) {
  const auto n = static_cast<std::size_t>(sim.rows());
  check_assigned(assigned, n, static_cast<int>(sim.cols()));
  check_weights(weights, n);

  LossValue out;
  out.grad = Eigen::MatrixXd::Zero(sim.rows(), sim.cols());
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    if (weights[static_cast<std::size_t>(i)] == 0.0) continue;
    const double peak = sim.row(i).maxCoeff();
    Eigen::ArrayXd shifted = (sim.row(i).array() - peak).exp();
    const double denom = shifted.sum();
    const double log_z = peak + std::log(denom);
    const int target = assigned[static_cast<std::size_t>(i)];
    out.value += log_z - sim(i, target);
    out.grad.row(i) = (shifted / denom).matrix();
    out.grad(i, target) -= 1.0;
  }
  return out;
}

LossValue compactness_loss(const Eigen::MatrixXd& features, const PrototypeBank& bank,
                           const std::vector<int>& assigned,
                           const std::vector<double>& weights) {
  bank.validate();
  if (features.cols() != bank.dim)
    throw contract_error("feature dimension does not match prototype bank");
  const auto n = static_cast<std::size_t>(features.rows());
  check_assigned(assigned, n, bank.flat_count());
  check_weights(weights, n);

  LossValue out;
  out.grad = Eigen::MatrixXd::Zero(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    if (weights[static_cast<std::size_t>(i)] == 0.0) continue;
    const double hnorm = features.row(i).norm();
    if (hnorm < kNormFloor)
      throw input_error("token " + std::to_string(i) + " has a zero-norm feature vector");
    const Eigen::RowVectorXd hn = features.row(i) / hnorm;
    Eigen::RowVectorXd pn = bank.vectors.row(assigned[static_cast<std::size_t>(i)]);
    pn /= pn.norm();
    const double s = hn.dot(pn);
    const double d = 1.0 - s;
    out.value += d * d;
    // d/dh (1-s)^2 = -2 (1-s) * (pn - s*hn) / |h|
    out.grad.row(i) = (-2.0 * d / hnorm) * (pn - s * hn);
  }
  return out;
}

double total_loss(double ce, double compactness, double compactness_weight) {
  return ce + compactness_weight * compactness;
}

Eigen::MatrixXd similarity_backward(const Eigen::MatrixXd& features,
                                    const PrototypeBank& bank, const Eigen::MatrixXd& sim,
                                    const Eigen::MatrixXd& grad_sim) {
  if (grad_sim.rows() != sim.rows() || grad_sim.cols() != sim.cols())
    throw contract_error("similarity_backward: gradient shape mismatch");
  if (sim.rows() != features.rows() || sim.cols() != bank.flat_count())
    throw contract_error("similarity_backward: similarity shape mismatch");

  Eigen::MatrixXd pn = bank.vectors;
  for (Eigen::Index r = 0; r < pn.rows(); ++r) pn.row(r) /= pn.row(r).norm();

  // ds_ij/dh_i = (pn_j - s_ij * hn_i) / |h_i|
  Eigen::MatrixXd grad = grad_sim * pn;                                  // sum_j g_ij pn_j
  Eigen::VectorXd gs = (grad_sim.array() * sim.array()).rowwise().sum();  // sum_j g_ij s_ij
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double hnorm = features.row(i).norm();
    const Eigen::RowVectorXd hn = features.row(i) / hnorm;
    grad.row(i) = (grad.row(i) - gs[i] * hn) / hnorm;
  }
  return grad;
}

void ema_update(PrototypeBank& bank, const Eigen::MatrixXd& features,
                const std::vector<int>& assigned, const std::vector<double>& include) {
  bank.validate();
  if (features.cols() != bank.dim)
    throw contract_error("feature dimension does not match prototype bank");
  const auto n = static_cast<std::size_t>(features.rows());
  check_assigned(assigned, n, bank.flat_count());
  check_weights(include, n);

  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(bank.flat_count(), bank.dim);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(bank.flat_count());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    if (include[static_cast<std::size_t>(i)] == 0.0) continue;
    sums.row(assigned[static_cast<std::size_t>(i)]) += features.row(i);
    counts[assigned[static_cast<std::size_t>(i)]] += 1.0;
  }
  const double alpha = bank.ema_ratio;
  for (Eigen::Index p = 0; p < bank.vectors.rows(); ++p) {
    if (counts[p] == 0.0) continue;
    bank.vectors.row(p) =
        alpha * bank.vectors.row(p) + (1.0 - alpha) * sums.row(p) / counts[p];
  }
}

}  // namespace mproto
