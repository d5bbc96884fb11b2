#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "common.hpp"

namespace mproto {

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw input_error("config field '" + field + "': " + why);
  };
  if (prototypes_per_class < 1) fail("prototypes_per_class", "must be >= 1");
  if (compactness_weight < 0.0) fail("compactness_weight", "must be >= 0");
  if (ema_ratio < 0.0 || ema_ratio >= 1.0) fail("ema_ratio", "must lie in [0, 1)");
  if (!(o_ratio > 0.0) || !(o_ratio < 1.0)) fail("o_ratio", "must lie strictly in (0, 1)");
  if (!(sinkhorn_reg > 0.0)) fail("sinkhorn_reg", "must be positive");
  if (sinkhorn_iters < 1) fail("sinkhorn_iters", "must be >= 1");
  if (!(peak_lr > 0.0)) fail("peak_lr", "must be positive");
  if (warmup_steps < 0) fail("warmup_steps", "must be >= 0");
  if (total_steps < 0) fail("total_steps", "must be >= 0");
  if (weight_decay < 0.0) fail("weight_decay", "must be >= 0");
  if (!(clip_norm > 0.0)) fail("clip_norm", "must be positive");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (encoder.type != "mlp" && encoder.type != "precomputed")
    fail("encoder.type", "must be 'mlp' or 'precomputed'");
  if (encoder.type == "mlp") {
    if (encoder.embed_dim < 1) fail("encoder.embed_dim", "must be >= 1");
    if (encoder.hidden_dim < 0) fail("encoder.hidden_dim", "must be >= 0");
    if (encoder.feature_dim < 1) fail("encoder.feature_dim", "must be >= 1");
  }
}

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

void AdamW::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr,
                 double weight_decay) {
  if (params.size() != grads.size())
    throw contract_error("optimizer: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value;
    const auto& g = grads[i].value;
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw contract_error("optimizer: gradient shape mismatch for " + params[i].name);
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g.cwiseProduct(g);
    Eigen::MatrixXd update =
        (m_[i] / bc1).array() / ((v_[i] / bc2).array().sqrt() + kEps);
    p -= lr * (update + weight_decay * p);
  }
}

namespace {

void clip_global_norm(std::vector<Tensor>& grads, double limit) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.value.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > limit && norm > 0.0) {
    const double scale = limit / norm;
    for (auto& g : grads) g.value *= scale;
  }
}

}  // namespace

std::unique_ptr<Encoder> make_encoder(const TrainConfig& config, const Vocabulary& vocab,
                                      std::shared_ptr<const FeatureStore> store) {
  if (config.encoder.type == "mlp") {
    return std::make_unique<MlpEncoder>(vocab.size(), config.encoder.embed_dim,
                                        config.encoder.hidden_dim, config.encoder.feature_dim,
                                        config.seed);
  }
  if (!store)
    throw input_error("precomputed encoder requires a feature store (set data.*_features)");
  return std::make_unique<PrecomputedEncoder>(std::move(store), vocab.size(),
                                              config.encoder.token_offsets,
                                              config.encoder.linear_head);
}

Trainer::Trainer(const TrainConfig& config, const ClassSet& classes)
    : config_(config),
      classes_(classes),
      bank_(),
      shuffle_rng_(config.seed + 2) {
  config_.validate();
  if (classes_.size() < 2)
    throw input_error("training needs the O class plus at least one entity class");
}

Trainer::Trainer(const TrainConfig& config, const ClassSet& classes,
                 std::unique_ptr<Encoder> encoder)
    : Trainer(config, classes) {
  encoder_ = std::move(encoder);
  bank_ = PrototypeBank::random_init(classes_.names(), config_.prototypes_per_class,
                                     encoder_->feature_dim(), config_.ema_ratio,
                                     config_.seed + 1);
}

double Trainer::learning_rate(long step) const {
  if (config_.warmup_steps > 0 && step < config_.warmup_steps)
    return config_.peak_lr * static_cast<double>(step + 1) / config_.warmup_steps;
  if (config_.total_steps <= 0) return config_.peak_lr;
  const long span = std::max<long>(1, config_.total_steps - config_.warmup_steps);
  const double remaining = static_cast<double>(config_.total_steps - step) / span;
  return config_.peak_lr * std::clamp(remaining, 0.0, 1.0);
}

StepMetrics Trainer::train_step(const Batch& batch) {
  if (batch.size() == 0) throw input_error("train_step: empty batch");
  if (batch.distant.size() != batch.size())
    throw contract_error("train_step: batch labels misaligned");

  const Eigen::MatrixXd features = encoder_->forward(batch);
  const auto partition = partition_by_label(batch.distant, classes_.size());
  const Eigen::MatrixXd sim = similarity(features, bank_);

  AssignOptions options;
  options.reg_weight = config_.sinkhorn_reg;
  options.max_iters = config_.sinkhorn_iters;
  options.o_ratio = config_.o_ratio;
  options.denoise_o = config_.dot;
  const auto assignment = assign_tokens(sim, bank_, partition, options);

  const auto ce = ce_loss(sim, assignment.assigned, assignment.noise_mask);
  const auto compact =
      compactness_loss(features, bank_, assignment.assigned, assignment.noise_mask);

  if (!encoder_->parameters().empty()) {
    Eigen::MatrixXd feature_grad = similarity_backward(features, bank_, sim, ce.grad);
    if (config_.compactness_weight != 0.0)
      feature_grad += config_.compactness_weight * compact.grad;
    auto grads = encoder_->gradients(batch, feature_grad);
    clip_global_norm(grads, config_.clip_norm);
    optimizer_.step(encoder_->parameters(), grads, learning_rate(step_count_),
                    config_.weight_decay);
  }

  ema_update(bank_, features, assignment.assigned, assignment.noise_mask);

  StepMetrics metrics;
  metrics.step = step_count_;
  metrics.learning_rate = learning_rate(step_count_);
  metrics.ce = ce.value;
  metrics.compactness = compact.value;
  metrics.total = total_loss(ce.value, compact.value, config_.compactness_weight);
  metrics.tokens = static_cast<long>(batch.size());
  metrics.o_tokens = static_cast<long>(partition.o_tokens().size());
  for (double w : assignment.noise_mask)
    if (w == 0.0) ++metrics.masked;
  ++step_count_;
  return metrics;
}

Batch Trainer::make_batch(const Corpus& corpus, const std::vector<std::size_t>& order,
                          std::size_t begin, std::size_t end) const {
  Batch batch;
  for (std::size_t k = begin; k < end && k < order.size(); ++k) {
    const auto sid = order[k];
    const auto& s = corpus.sentences.at(sid);
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      batch.tokens.push_back({static_cast<std::uint32_t>(sid), static_cast<std::uint32_t>(i),
                              vocab_.id_of(s.tokens[i])});
      batch.distant.push_back(s.distant[i]);
      if (s.has_gold()) batch.gold.push_back(s.gold[i]);
    }
  }
  return batch;
}

std::vector<std::size_t> Trainer::shuffled_sentence_order(std::size_t count) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng_);
  return order;
}

void Trainer::use_store(std::shared_ptr<const FeatureStore> store) {
  if (auto* pre = dynamic_cast<PrecomputedEncoder*>(encoder_.get())) {
    if (store) pre->set_store(std::move(store));
  }
}

std::vector<std::vector<int>> Trainer::predict(const Corpus& corpus) {
  std::vector<std::vector<int>> out;
  std::vector<std::size_t> order(corpus.sentences.size());
  std::iota(order.begin(), order.end(), 0);
  const auto stride = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t begin = 0; begin < order.size(); begin += stride) {
    const auto end = std::min(order.size(), begin + stride);
    Batch batch = make_batch(corpus, order, begin, end);
    if (batch.size() == 0) {
      for (std::size_t k = begin; k < end; ++k) out.emplace_back();
      continue;
    }
    const Eigen::MatrixXd features = encoder_->forward(batch);
    const auto labels = classify(similarity(features, bank_), bank_.per_class);
    std::size_t cursor = 0;
    for (std::size_t k = begin; k < end; ++k) {
      const auto len = corpus.sentences[order[k]].tokens.size();
      out.emplace_back(labels.begin() + static_cast<std::ptrdiff_t>(cursor),
                       labels.begin() + static_cast<std::ptrdiff_t>(cursor + len));
      cursor += len;
    }
  }
  return out;
}

std::map<int, double> Trainer::similarity_diagnostic(const Corpus& corpus) {
  if (!corpus.has_gold())
    throw input_error("similarity diagnostic needs gold labels");
  std::map<int, double> sums;
  std::map<int, long> counts;
  std::vector<std::size_t> order(corpus.sentences.size());
  std::iota(order.begin(), order.end(), 0);
  const auto stride = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t begin = 0; begin < order.size(); begin += stride) {
    const auto end = std::min(order.size(), begin + stride);
    Batch batch = make_batch(corpus, order, begin, end);
    if (batch.size() == 0) continue;
    const Eigen::MatrixXd sim = similarity(encoder_->forward(batch), bank_);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const int cls = batch.gold[i];
      double best = -2.0;
      for (int m = 0; m < bank_.per_class; ++m)
        best = std::max(best, sim(static_cast<Eigen::Index>(i), bank_.flat_index(cls, m)));
      sums[cls] += best;
      counts[cls] += 1;
    }
  }
  std::map<int, double> out;
  for (const auto& [cls, total] : sums) out[cls] = total / static_cast<double>(counts[cls]);
  return out;
}

Eigen::MatrixXi Trainer::transport_diagnostic(const Corpus& corpus) {
  if (!corpus.has_gold()) throw input_error("transport diagnostic needs gold labels");
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(classes_.size(), classes_.size());
  std::vector<std::size_t> order(corpus.sentences.size());
  std::iota(order.begin(), order.end(), 0);
  const auto stride = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t begin = 0; begin < order.size(); begin += stride) {
    const auto end = std::min(order.size(), begin + stride);
    Batch batch = make_batch(corpus, order, begin, end);
    if (batch.size() == 0) continue;
    const Eigen::MatrixXd sim = similarity(encoder_->forward(batch), bank_);
    const auto partition = partition_by_label(batch.distant, classes_.size());
    AssignOptions options;
    options.reg_weight = config_.sinkhorn_reg;
    options.max_iters = config_.sinkhorn_iters;
    options.o_ratio = config_.o_ratio;
    options.denoise_o = config_.dot;
    const auto assignment = assign_tokens(sim, bank_, partition, options);
    counts += transport_plan_diagnostic(assignment, batch.distant, batch.gold, bank_);
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Checkpoint format (little-endian binary):
//   magic "MPCKPT1\0", format version u32
//   class names, vocabulary tokens
//   bank: K, M, D i32; ema_ratio f64; (K*M)xD doubles row-major
//   encoder: type tag u8 + hyperparameters + named tensors
//   optimizer: step count i64 + first/second moment tensors
//   trainer: step counter i64, shuffle RNG state string
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'M', 'P', 'C', 'K', 'P', 'T', '1', '\0'};

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_i32(std::ostream& out, std::int32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_string(std::ostream& out, const std::string& s) {
  put_i64(out, static_cast<std::int64_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  put_i64(out, m.rows());
  put_i64(out, m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::int32_t get_i32(std::istream& in) {
  std::int32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::int64_t get_i64(std::istream& in) {
  std::int64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
double get_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string get_string(std::istream& in) {
  auto n = get_i64(in);
  std::string s(static_cast<std::size_t>(n), '\0');
  in.read(s.data(), n);
  return s;
}
Eigen::MatrixXd get_matrix(std::istream& in) {
  auto rows = get_i64(in);
  auto cols = get_i64(in);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_f64(in);
  return m;
}

void put_tensors(std::ostream& out, const std::vector<Tensor>& tensors) {
  put_i64(out, static_cast<std::int64_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_string(out, t.name);
    put_matrix(out, t.value);
  }
}

std::vector<Tensor> get_tensors(std::istream& in) {
  auto n = get_i64(in);
  std::vector<Tensor> tensors;
  for (std::int64_t i = 0; i < n; ++i) {
    Tensor t;
    t.name = get_string(in);
    t.value = get_matrix(in);
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace

void Trainer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(out, 1);

  put_i64(out, classes_.size());
  for (const auto& name : classes_.names()) put_string(out, name);

  put_i64(out, vocab_.size());
  for (const auto& token : vocab_.tokens()) put_string(out, token);

  put_i32(out, bank_.num_classes);
  put_i32(out, bank_.per_class);
  put_i32(out, bank_.dim);
  put_f64(out, bank_.ema_ratio);
  put_matrix(out, bank_.vectors);

  if (const auto* mlp = dynamic_cast<const MlpEncoder*>(encoder_.get())) {
    out.put(0);
    put_i32(out, mlp->vocab_size());
    put_i32(out, mlp->embed_dim());
    put_i32(out, mlp->hidden_dim());
    put_i32(out, mlp->feature_dim());
    put_tensors(out, mlp->parameters());
  } else if (const auto* pre = dynamic_cast<const PrecomputedEncoder*>(encoder_.get())) {
    out.put(1);
    put_i32(out, pre->vocab_size());
    put_i32(out, pre->feature_dim());
    out.put(pre->has_token_offsets() ? 1 : 0);
    out.put(pre->has_linear_head() ? 1 : 0);
    put_tensors(out, pre->parameters());
  } else {
    throw contract_error("checkpoint: unknown encoder type");
  }

  put_i64(out, optimizer_.t_);
  put_i64(out, static_cast<std::int64_t>(optimizer_.m_.size()));
  for (std::size_t i = 0; i < optimizer_.m_.size(); ++i) {
    put_matrix(out, optimizer_.m_[i]);
    put_matrix(out, optimizer_.v_[i]);
  }

  put_i64(out, step_count_);
  std::ostringstream rng_state;
  rng_state << shuffle_rng_;
  put_string(out, rng_state.str());
  if (!out) throw io_error("failed while writing checkpoint: " + path);
}

Trainer Trainer::load(const std::string& path, const TrainConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw io_error(path + ": not a checkpoint file");
  if (get_u32(in) != 1) throw io_error(path + ": unsupported checkpoint version");

  auto n_classes = get_i64(in);
  std::vector<std::string> names;
  for (std::int64_t i = 0; i < n_classes; ++i) names.push_back(get_string(in));
  if (names.empty() || names[0] != "O") throw io_error(path + ": malformed class set");
  ClassSet classes(std::vector<std::string>(names.begin() + 1, names.end()));

  auto n_vocab = get_i64(in);
  Vocabulary vocab;
  for (std::int64_t i = 0; i < n_vocab; ++i) vocab.add(get_string(in));

  TrainConfig cfg = config;
  PrototypeBank bank;
  bank.num_classes = get_i32(in);
  bank.per_class = get_i32(in);
  bank.dim = get_i32(in);
  bank.ema_ratio = get_f64(in);
  bank.class_names = classes.names();
  bank.vectors = get_matrix(in);
  bank.validate();
  cfg.prototypes_per_class = bank.per_class;
  cfg.ema_ratio = bank.ema_ratio;

  const int tag = in.get();
  std::unique_ptr<Encoder> encoder;
  if (tag == 0) {
    const int vocab_size = get_i32(in);
    const int embed_dim = get_i32(in);
    const int hidden_dim = get_i32(in);
    const int feature_dim = get_i32(in);
    auto mlp = std::make_unique<MlpEncoder>(vocab_size, embed_dim, hidden_dim, feature_dim,
                                            cfg.seed);
    mlp->parameters() = get_tensors(in);
    cfg.encoder.type = "mlp";
    cfg.encoder.embed_dim = embed_dim;
    cfg.encoder.hidden_dim = hidden_dim;
    cfg.encoder.feature_dim = feature_dim;
    encoder = std::move(mlp);
  } else if (tag == 1) {
    const int vocab_size = get_i32(in);
    const int feature_dim = get_i32(in);
    const bool offsets = in.get() != 0;
    const bool head = in.get() != 0;
    auto store = std::make_shared<FeatureStore>(feature_dim);
    auto pre = std::make_unique<PrecomputedEncoder>(store, vocab_size, offsets, head);
    pre->parameters() = get_tensors(in);
    cfg.encoder.type = "precomputed";
    cfg.encoder.token_offsets = offsets;
    cfg.encoder.linear_head = head;
    encoder = std::move(pre);
  } else {
    throw io_error(path + ": unknown encoder tag in checkpoint");
  }

  Trainer trainer(cfg, classes);
  trainer.encoder_ = std::move(encoder);
  trainer.bank_ = std::move(bank);
  trainer.vocab_ = std::move(vocab);

  trainer.optimizer_.t_ = get_i64(in);
  auto n_moments = get_i64(in);
  for (std::int64_t i = 0; i < n_moments; ++i) {
    trainer.optimizer_.m_.push_back(get_matrix(in));
    trainer.optimizer_.v_.push_back(get_matrix(in));
  }

  trainer.step_count_ = get_i64(in);
  std::istringstream rng_state(get_string(in));
  rng_state >> trainer.shuffle_rng_;
  if (!in) throw io_error(path + ": truncated checkpoint");
  return trainer;
}

TrainSummary run_training(const TrainConfig& config, const TrainData& data,
                          const std::string& checkpoint_path, const StepCallback& on_step,
                          const EpochCallback& on_epoch) {
  TrainConfig cfg = config;
  cfg.validate();
  if (data.train.sentences.empty()) throw input_error("training corpus is empty");

  const auto n_sentences = data.train.sentences.size();
  const long steps_per_epoch = static_cast<long>(
      (n_sentences + static_cast<std::size_t>(cfg.batch_size) - 1) /
      static_cast<std::size_t>(cfg.batch_size));
  if (cfg.total_steps == 0)
    cfg.total_steps = static_cast<int>(steps_per_epoch * cfg.epochs);

  Trainer trainer(cfg, data.classes, make_encoder(cfg, data.vocab, data.train_store));
  trainer.set_vocabulary(data.vocab);

  const bool select_on_dev = !data.dev.sentences.empty() && data.dev.has_gold();
  TrainSummary summary;
  double best_f1 = -1.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    trainer.use_store(data.train_store);
    const auto order = trainer.shuffled_sentence_order(n_sentences);
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const auto metrics = trainer.train_step(trainer.make_batch(data.train, order, begin, end));
      if (on_step) on_step(metrics);
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.steps_done = trainer.step_count();
    if (!data.dev.sentences.empty()) {
      trainer.use_store(data.dev_store);
      if (data.dev.has_gold()) {
        auto predictions = trainer.predict(data.dev);
        std::vector<std::vector<int>> gold;
        for (const auto& s : data.dev.sentences) gold.push_back(s.gold);
        em.dev = span_f1(predictions, gold, data.classes);
        em.has_dev = true;
        for (const auto& [cls, value] : trainer.similarity_diagnostic(data.dev))
          em.class_similarity[data.classes.name(cls)] = value;
      }
    }
    if (select_on_dev) {
      if (em.dev.f1 > best_f1) {
        best_f1 = em.dev.f1;
        summary.best_epoch = epoch;
        summary.best_dev_f1 = em.dev.f1;
        em.is_best = true;
        if (!checkpoint_path.empty()) trainer.save(checkpoint_path);
      }
    } else if (!checkpoint_path.empty() && epoch == cfg.epochs) {
      trainer.save(checkpoint_path);
      summary.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(em);
  }
  summary.steps = trainer.step_count();

  if (!data.test.sentences.empty() && data.test.has_gold()) {
    Trainer best = checkpoint_path.empty() || summary.best_epoch < 0
                       ? std::move(trainer)
                       : Trainer::load(checkpoint_path, cfg);
    best.use_store(data.test_store);
    auto predictions = best.predict(data.test);
    std::vector<std::vector<int>> gold;
    for (const auto& s : data.test.sentences) gold.push_back(s.gold);
    summary.test = span_f1(predictions, gold, data.classes);
    summary.has_test = true;
  }
  return summary;
}

}  // namespace mproto
