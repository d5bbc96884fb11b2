#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "bank.hpp"
#include "ot.hpp"

namespace mproto {

// Token indices of a batch grouped by distant label; entry 0 holds the
// O-labeled tokens.
struct ClassPartition {
  std::vector<std::vector<int>> by_class;
  int num_classes() const { return static_cast<int>(by_class.size()); }
  const std::vector<int>& o_tokens() const { return by_class[0]; }
  std::size_t entity_token_count() const;
};

ClassPartition partition_by_label(const std::vector<int>& distant_labels, int num_classes);

// Row/column masses for an assignment between tokens (rows) and prototypes
// (columns).
struct AssignmentMarginals {
  Eigen::VectorXd row_weights;
  Eigen::VectorXd col_weights;
};

// Column masses for assigning n_o O-labeled tokens across all K*M
// prototypes: a share o_ratio of the tokens goes to the M prototypes of the
// O class (evenly), the rest spreads evenly over the (K-1)*M entity
// prototypes. Row masses are all ones.
AssignmentMarginals build_dot_constraints(int n_o_tokens, int num_classes, int per_class,
                                          double o_ratio);

struct AssignmentResult {
  // Flattened prototype index per token; every token in the batch gets one.
  std::vector<int> assigned;
  // 1 for entity-labeled tokens and O tokens assigned to an O prototype;
  // 0 flags a suspected unlabeled entity among the O tokens.
  std::vector<double> noise_mask;
  // Retained plans for diagnostics, keyed by class (entity classes only).
  std::map<int, ot::TransportPlan> entity_plans;
  ot::TransportPlan o_plan;
  bool has_o_plan = false;
};

struct AssignOptions {
  double reg_weight = 1e-3;
  int max_iters = 100;
  double o_ratio = 0.01;       // share of O tokens expected on O prototypes
  bool denoise_o = true;       // false: O tokens only compete for O prototypes
};

// Runs per-class optimal transport for entity tokens and the all-prototype
// assignment for O tokens, recording hard assignments and the O noise mask.
// `sim` must be the full similarity matrix of the batch against the bank.
AssignmentResult assign_tokens(const Eigen::MatrixXd& sim, const PrototypeBank& bank,
                               const ClassPartition& partition, const AssignOptions& options);

// Counts, for tokens distantly labeled O whose gold class is an entity
// class, gold class (row) against the class of the assigned prototype
// (column).
Eigen::MatrixXi transport_plan_diagnostic(const AssignmentResult& result,
                                          const std::vector<int>& distant_labels,
                                          const std::vector<int>& gold_labels,
                                          const PrototypeBank& bank);

}  // namespace mproto
