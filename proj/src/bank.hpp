#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace mproto {

// K classes x M prototypes per class, stored as a (K*M) x D matrix in
// class-major order: row c*M + m is prototype m of class c. Class 0 is the
// non-entity class. Prototypes are kept unnormalized; cosine similarity
// absorbs scale.
struct PrototypeBank {
  int num_classes = 0;      // K
  int per_class = 0;        // M
  int dim = 0;              // D
  double ema_ratio = 0.9;   // weight kept on the old prototype per update
  std::vector<std::string> class_names;
  Eigen::MatrixXd vectors;  // (K*M) x D

  int flat_count() const { return num_classes * per_class; }
  int class_of(int flat_index) const { return flat_index / per_class; }
  int flat_index(int cls, int proto) const { return cls * per_class + proto; }

  // Unit-length prototypes drawn from a seeded Gaussian.
  static PrototypeBank random_init(const std::vector<std::string>& class_names,
                                   int per_class, int dim, double ema_ratio,
                                   std::uint64_t seed);

  // Shape/finite/nonzero-norm checks; throws contract_error on violation.
  void validate() const;
};

// n x (K*M) cosine similarities between feature rows and every prototype,
// columns in bank order. Zero-norm features are rejected.
Eigen::MatrixXd similarity(const Eigen::MatrixXd& features, const PrototypeBank& bank);

// Class of the globally most similar prototype per token; ties break toward
// the lowest flattened prototype index.
std::vector<int> classify(const Eigen::MatrixXd& sim, int per_class);

struct LossValue {
  double value = 0.0;
  Eigen::MatrixXd grad;  // same shape as the differentiated argument
};

// Masked cross entropy over prototype similarities:
//   -sum_i w_i log softmax(sim_i)[assigned_i]
// Gradient is with respect to the similarity matrix. Tokens with w=0 are
// skipped entirely and contribute exact zeros.
LossValue ce_loss(const Eigen::MatrixXd& sim, const std::vector<int>& assigned,
                  const std::vector<double>& weights);

// Masked squared cosine distance to the assigned prototype:
//   sum_i w_i (1 - cos(h_i, p_{assigned_i}))^2
// Gradient is with respect to the features; prototypes are constants.
LossValue compactness_loss(const Eigen::MatrixXd& features, const PrototypeBank& bank,
                           const std::vector<int>& assigned,
                           const std::vector<double>& weights);

double total_loss(double ce, double compactness, double compactness_weight);

// Backpropagates a gradient on the similarity matrix to the features,
// treating prototypes as constants.
Eigen::MatrixXd similarity_backward(const Eigen::MatrixXd& features,
                                    const PrototypeBank& bank,
                                    const Eigen::MatrixXd& sim,
                                    const Eigen::MatrixXd& grad_sim);

// Moves every prototype that received at least one included feature toward
// the mean of those features: p <- ema_ratio * p + (1 - ema_ratio) * mean.
// Prototypes with no assigned features stay put.
void ema_update(PrototypeBank& bank, const Eigen::MatrixXd& features,
                const std::vector<int>& assigned, const std::vector<double>& include);

}  // namespace mproto
