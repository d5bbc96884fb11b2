#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "assign.hpp"
#include "bank.hpp"
#include "corpus.hpp"
#include "encoder.hpp"

namespace mproto {

struct EncoderConfig {
  std::string type = "mlp";  // "mlp" | "precomputed"
  // mlp
  int embed_dim = 32;
  int hidden_dim = 64;
  int feature_dim = 32;
  // precomputed
  bool token_offsets = false;
  bool linear_head = false;
};

struct TrainConfig {
  int prototypes_per_class = 3;
  double compactness_weight = 0.05;
  double ema_ratio = 0.9;
  double o_ratio = 0.01;
  bool dot = true;
  double sinkhorn_reg = 1e-3;
  int sinkhorn_iters = 100;
  double peak_lr = 1e-4;
  int warmup_steps = 100;
  int total_steps = 0;  // 0: no decay after warmup; set by the epoch loop
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  int batch_size = 32;  // sentences per step
  int epochs = 10;
  std::uint64_t seed = 1;
  EncoderConfig encoder;

  void validate() const;  // throws input_error naming the offending field
};

struct StepMetrics {
  long step = 0;
  double learning_rate = 0.0;
  double ce = 0.0;
  double compactness = 0.0;
  double total = 0.0;
  long tokens = 0;
  long o_tokens = 0;
  long masked = 0;  // O tokens excluded as suspected unlabeled entities
};

// Adam with decoupled weight decay over a list of tensors.
class AdamW {
 public:
  AdamW() = default;
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr,
            double weight_decay);
  long iterations() const { return t_; }

 private:
  friend class Trainer;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

// One training state: encoder parameters, prototype bank, optimizer
// moments, step counter, and the shuffling RNG. Loss/metric math is pure;
// train_step mutates the state and must not run concurrently.
class Trainer {
 public:
  Trainer(const TrainConfig& config, const ClassSet& classes,
          std::unique_ptr<Encoder> encoder);

  StepMetrics train_step(const Batch& batch);

  // Inference path: encode then take the class of the most similar
  // prototype. No assignment, no masking.
  std::vector<std::vector<int>> predict(const Corpus& corpus);

  // Mean over gold-class-c tokens of the best similarity to class c's own
  // prototypes. Classes with no gold tokens are omitted.
  std::map<int, double> similarity_diagnostic(const Corpus& corpus);

  // Gold class vs assigned-prototype class counts for tokens the distant
  // annotation called O, accumulated over minibatches.
  Eigen::MatrixXi transport_diagnostic(const Corpus& corpus);

  // Swaps the feature store consulted by a precomputed encoder (no-op for
  // the mlp encoder). Needed when predicting on a different split.
  void use_store(std::shared_ptr<const FeatureStore> store);

  std::vector<std::size_t> shuffled_sentence_order(std::size_t count);
  Batch make_batch(const Corpus& corpus, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end) const;

  double learning_rate(long step) const;

  void save(const std::string& path) const;
  static Trainer load(const std::string& path, const TrainConfig& config);

  const PrototypeBank& bank() const { return bank_; }
  PrototypeBank& bank() { return bank_; }
  Encoder& encoder() { return *encoder_; }
  const ClassSet& classes() const { return classes_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  void set_vocabulary(Vocabulary vocab) { vocab_ = std::move(vocab); }
  long step_count() const { return step_count_; }
  const TrainConfig& config() const { return config_; }

 private:
  Trainer(const TrainConfig& config, const ClassSet& classes);
  Eigen::MatrixXd encode(const Corpus& corpus, std::size_t sentence_begin,
                         std::size_t sentence_end, Batch* batch_out) const;

  TrainConfig config_;
  ClassSet classes_;
  Vocabulary vocab_;
  std::unique_ptr<Encoder> encoder_;
  PrototypeBank bank_;
  AdamW optimizer_;
  long step_count_ = 0;
  std::mt19937_64 shuffle_rng_;
};

// Everything run_training consumes. Stores may be null for the mlp encoder.
struct TrainData {
  ClassSet classes;
  Vocabulary vocab;
  Corpus train, dev, test;
  std::shared_ptr<const FeatureStore> train_store, dev_store, test_store;
};

struct EpochMetrics {
  int epoch = 0;
  long steps_done = 0;
  bool has_dev = false;
  SpanScores dev;
  std::map<std::string, double> class_similarity;
  bool is_best = false;
};

struct TrainSummary {
  int best_epoch = -1;
  double best_dev_f1 = 0.0;
  bool has_test = false;
  SpanScores test;
  long steps = 0;
};

using StepCallback = std::function<void(const StepMetrics&)>;
using EpochCallback = std::function<void(const EpochMetrics&)>;

// Full training protocol: per-epoch shuffling, train steps, dev evaluation
// with best-checkpoint selection, final test evaluation with the best
// checkpoint. `checkpoint_path` receives the best state (and the last state
// when no dev gold is available for selection).
TrainSummary run_training(const TrainConfig& config, const TrainData& data,
                          const std::string& checkpoint_path,
                          const StepCallback& on_step = {},
                          const EpochCallback& on_epoch = {});

std::unique_ptr<Encoder> make_encoder(const TrainConfig& config, const Vocabulary& vocab,
                                      std::shared_ptr<const FeatureStore> store);

}  // namespace mproto
