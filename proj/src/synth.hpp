#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "encoder.hpp"

namespace mproto {

// Desk-scale corpus generator. Token features live on the unit sphere in
// sub-clusters (one set of directions per class x sub-cluster, all pairwise
// separated by at least min_separation_deg), entity surface forms recur
// across splits, and incomplete labeling is simulated by flipping the
// distant label of a token-mass fraction of entity surface forms to O.
struct SynthConfig {
  std::vector<std::string> entity_classes = {"A", "B"};
  int sub_clusters = 2;               // per class, O included
  int feature_dim = 8;
  double min_separation_deg = 60.0;
  double noise = 0.08;                // Gaussian spread around the direction
  int entity_tokens_per_cluster = 500;
  int o_tokens_per_cluster = 1500;
  int strings_per_cluster = 40;
  int max_entity_len = 2;             // spans repeat one surface form
  int sentence_target_len = 12;
  double unlabeled_fraction = 0.0;    // entity-token mass flipped to O
  double train_fraction = 0.7;
  double dev_fraction = 0.15;         // remainder is the test split
  std::uint64_t seed = 1;
};

struct SynthSplit {
  Corpus corpus;
  FeatureStore store;
};

struct SynthOutput {
  ClassSet classes;
  SynthSplit train, dev, test;
  // (K * sub_clusters) x D cluster directions, class-major.
  Eigen::MatrixXd directions;
  std::size_t entity_tokens = 0;
  std::size_t flipped_tokens = 0;
  std::vector<std::string> unlabeled_strings;

  const Eigen::VectorXd direction(int cls, int cluster) const;
};

SynthOutput generate_synthetic(const SynthConfig& config);

}  // namespace mproto
