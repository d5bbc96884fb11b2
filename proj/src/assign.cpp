#include "assign.hpp"

#include "common.hpp"

namespace mproto {

std::size_t ClassPartition::entity_token_count() const {
  std::size_t n = 0;
  for (std::size_t c = 1; c < by_class.size(); ++c) n += by_class[c].size();
  return n;
}

ClassPartition partition_by_label(const std::vector<int>& distant_labels, int num_classes) {
  if (num_classes < 2) throw contract_error("partition: need at least two classes");
  ClassPartition part;
  part.by_class.resize(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < distant_labels.size(); ++i) {
    int c = distant_labels[i];
    if (c < 0 || c >= num_classes)
      throw contract_error("partition: label " + std::to_string(c) + " out of range");
    part.by_class[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
  }
  return part;
}

AssignmentMarginals build_dot_constraints(int n_o_tokens, int num_classes, int per_class,
                                          double o_ratio) {
  if (num_classes < 2) throw contract_error("dot constraints: need at least two classes");
  if (n_o_tokens < 1) throw contract_error("dot constraints: need at least one token");
  if (per_class < 1) throw contract_error("dot constraints: need at least one prototype per class");
  if (!(o_ratio > 0.0) || !(o_ratio < 1.0))
    throw input_error("o_ratio must lie strictly between 0 and 1");

  AssignmentMarginals m;
  m.row_weights = Eigen::VectorXd::Ones(n_o_tokens);
  m.col_weights.resize(static_cast<Eigen::Index>(num_classes) * per_class);
  const double n = static_cast<double>(n_o_tokens);
  const double o_mass = o_ratio * n / per_class;
  const double entity_mass = (1.0 - o_ratio) * n / ((num_classes - 1) * per_class);
  for (int c = 0; c < num_classes; ++c)
    for (int p = 0; p < per_class; ++p)
      m.col_weights[static_cast<Eigen::Index>(c) * per_class + p] =
          c == 0 ? o_mass : entity_mass;
  return m;
}

namespace {

// Gathers the similarity block (rows = listed tokens, columns
// [col_begin, col_begin+width)) as a cosine-distance cost matrix.
Eigen::MatrixXd cost_block(const Eigen::MatrixXd& sim, const std::vector<int>& rows,
                           int col_begin, int width) {
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < width; ++c)
      cost(static_cast<Eigen::Index>(r), c) = 1.0 - sim(rows[r], col_begin + c);
  return cost;
}

}  // namespace

AssignmentResult assign_tokens(const Eigen::MatrixXd& sim, const PrototypeBank& bank,
                               const ClassPartition& partition, const AssignOptions& options) {
  if (partition.num_classes() != bank.num_classes)
    throw contract_error("assign: partition and bank class counts differ");
  if (sim.cols() != bank.flat_count())
    throw contract_error("assign: similarity width does not match bank");

  const int M = bank.per_class;
  AssignmentResult result;
  result.assigned.assign(static_cast<std::size_t>(sim.rows()), -1);
  result.noise_mask.assign(static_cast<std::size_t>(sim.rows()), 1.0);

  // Entity classes: tokens of class c compete for that class's prototypes
  // under an even per-prototype share. Classes absent from the batch are
  // skipped.
  for (int c = 1; c < bank.num_classes; ++c) {
    const auto& tokens = partition.by_class[static_cast<std::size_t>(c)];
    if (tokens.empty()) continue;
    Eigen::MatrixXd cost = cost_block(sim, tokens, c * M, M);
    Eigen::VectorXd a = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(tokens.size()));
    Eigen::VectorXd b =
        Eigen::VectorXd::Constant(M, static_cast<double>(tokens.size()) / M);
    auto plan = ot::sinkhorn(cost, a, b, options.reg_weight, options.max_iters);
    auto local = ot::hard_assign(plan);
    for (std::size_t r = 0; r < tokens.size(); ++r)
      result.assigned[static_cast<std::size_t>(tokens[r])] = bank.flat_index(c, local[r]);
    result.entity_plans.emplace(c, std::move(plan));
  }

  // O tokens. With denoising they compete for every prototype and tokens
  // landing on an entity prototype are masked out of the loss; without it
  // they are assigned within the O class like any other class.
  const auto& o_tokens = partition.o_tokens();
  if (!o_tokens.empty()) {
    if (options.denoise_o) {
      Eigen::MatrixXd cost = cost_block(sim, o_tokens, 0, bank.flat_count());
      auto marginals = build_dot_constraints(static_cast<int>(o_tokens.size()),
                                             bank.num_classes, M, options.o_ratio);
      auto plan = ot::sinkhorn(cost, marginals.row_weights, marginals.col_weights,
                               options.reg_weight, options.max_iters);
      auto local = ot::hard_assign(plan);
      for (std::size_t r = 0; r < o_tokens.size(); ++r) {
        const int flat = local[r];
        result.assigned[static_cast<std::size_t>(o_tokens[r])] = flat;
        result.noise_mask[static_cast<std::size_t>(o_tokens[r])] =
            bank.class_of(flat) == 0 ? 1.0 : 0.0;
      }
      result.o_plan = std::move(plan);
      result.has_o_plan = true;
    } else {
      Eigen::MatrixXd cost = cost_block(sim, o_tokens, 0, M);
      Eigen::VectorXd a = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(o_tokens.size()));
      Eigen::VectorXd b =
          Eigen::VectorXd::Constant(M, static_cast<double>(o_tokens.size()) / M);
      auto plan = ot::sinkhorn(cost, a, b, options.reg_weight, options.max_iters);
      auto local = ot::hard_assign(plan);
      for (std::size_t r = 0; r < o_tokens.size(); ++r)
        result.assigned[static_cast<std::size_t>(o_tokens[r])] = bank.flat_index(0, local[r]);
      result.o_plan = std::move(plan);
      result.has_o_plan = true;
    }
  }
  return result;
}

Eigen::MatrixXi transport_plan_diagnostic(const AssignmentResult& result,
                                          const std::vector<int>& distant_labels,
                                          const std::vector<int>& gold_labels,
                                          const PrototypeBank& bank) {
  if (gold_labels.size() != distant_labels.size() ||
      gold_labels.size() != result.assigned.size())
    throw input_error("transport diagnostic: gold labels missing or misaligned");
  const int K = bank.num_classes;
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(K, K);
  for (std::size_t i = 0; i < distant_labels.size(); ++i) {
    if (distant_labels[i] != 0) continue;  // only tokens the annotation called O
    const int gold = gold_labels[i];
    if (gold <= 0) continue;  // true negatives are not of interest here
    if (gold >= K) throw input_error("transport diagnostic: gold label out of range");
    counts(gold, bank.class_of(result.assigned[i]))++;
  }
  return counts;
}

}  // namespace mproto
