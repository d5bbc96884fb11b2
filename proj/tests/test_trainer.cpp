#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "common.hpp"
#include "synth.hpp"
#include "trainer.hpp"

using Eigen::MatrixXd;
using namespace mproto;

namespace {

SynthConfig tiny_synth(std::uint64_t seed = 5) {
  SynthConfig cfg;
  cfg.entity_classes = {"A", "B"};
  cfg.sub_clusters = 2;
  cfg.feature_dim = 8;
  cfg.min_separation_deg = 60.0;
  cfg.noise = 0.08;
  cfg.entity_tokens_per_cluster = 120;
  cfg.o_tokens_per_cluster = 250;
  cfg.strings_per_cluster = 20;
  cfg.unlabeled_fraction = 0.2;
  cfg.seed = seed;
  return cfg;
}

TrainConfig synth_train_config() {
  TrainConfig cfg;
  cfg.prototypes_per_class = 2;
  cfg.compactness_weight = 0.05;
  cfg.ema_ratio = 0.5;
  cfg.o_ratio = 0.7;
  cfg.peak_lr = 1e-3;
  cfg.warmup_steps = 10;
  cfg.batch_size = 16;
  cfg.epochs = 4;
  cfg.seed = 3;
  cfg.encoder.type = "precomputed";
  cfg.encoder.token_offsets = true;
  cfg.encoder.linear_head = false;
  return cfg;
}

TrainData make_data(const SynthOutput& synth) {
  TrainData data;
  data.classes = synth.classes;
  data.train = synth.train.corpus;
  data.dev = synth.dev.corpus;
  data.test = synth.test.corpus;
  data.train_store = std::make_shared<FeatureStore>(synth.train.store);
  data.dev_store = std::make_shared<FeatureStore>(synth.dev.store);
  data.test_store = std::make_shared<FeatureStore>(synth.test.store);
  for (const auto& s : data.train.sentences)
    for (const auto& t : s.tokens) data.vocab.add(t);
  return data;
}

bool tensors_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].value.rows() != b[i].value.rows() || a[i].value.cols() != b[i].value.cols())
      return false;
    if (a[i].value != b[i].value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config validation names the offending field") {
  TrainConfig cfg;
  cfg.o_ratio = 1.5;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("o_ratio"), input_error);
  cfg = TrainConfig{};
  cfg.ema_ratio = 1.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("ema_ratio"), input_error);
  cfg = TrainConfig{};
  cfg.encoder.type = "transformer";
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("encoder.type"), input_error);
}

TEST_CASE("learning rate warms up linearly then decays to zero") {
  TrainConfig cfg;
  cfg.peak_lr = 1.0;
  cfg.warmup_steps = 10;
  cfg.total_steps = 110;
  ClassSet classes({"A"});
  Vocabulary vocab;
  vocab.add("x");
  Trainer trainer(cfg, classes, std::make_unique<MlpEncoder>(vocab.size(), 4, 0, 4, 1));
  CHECK(trainer.learning_rate(0) == doctest::Approx(0.1));
  CHECK(trainer.learning_rate(9) == doctest::Approx(1.0));
  CHECK(trainer.learning_rate(10) == doctest::Approx(1.0));
  CHECK(trainer.learning_rate(60) == doctest::Approx(0.5));
  CHECK(trainer.learning_rate(110) == doctest::Approx(0.0));
  CHECK(trainer.learning_rate(500) == doctest::Approx(0.0));
}

TEST_CASE("adamw moves parameters against the gradient and applies decay") {
  std::vector<Tensor> params = {{"w", MatrixXd::Constant(1, 1, 1.0)}};
  std::vector<Tensor> grads = {{"w", MatrixXd::Constant(1, 1, 0.5)}};
  AdamW opt;
  opt.step(params, grads, 0.1, 0.0);
  // first Adam step moves by ~lr against the gradient sign
  CHECK(params[0].value(0, 0) == doctest::Approx(0.9).epsilon(1e-6));

  std::vector<Tensor> decayed = {{"w", MatrixXd::Constant(1, 1, 1.0)}};
  std::vector<Tensor> zero = {{"w", MatrixXd::Constant(1, 1, 0.0)}};
  AdamW opt2;
  opt2.step(decayed, zero, 0.1, 0.5);
  CHECK(decayed[0].value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 * 1.0));
}

TEST_CASE("overfitting one tiny batch drives the loss down") {
  // mlp encoder trained repeatedly on the same batch
  ClassSet classes({"A", "B"});
  Vocabulary vocab;
  std::vector<std::string> words = {"o1", "o2", "a1", "a2", "b1", "b2"};
  for (const auto& w : words) vocab.add(w);

  TrainConfig cfg;
  cfg.prototypes_per_class = 2;
  cfg.compactness_weight = 0.05;
  cfg.ema_ratio = 0.9;
  cfg.o_ratio = 0.6;
  cfg.peak_lr = 5e-3;
  cfg.warmup_steps = 5;
  cfg.seed = 9;
  cfg.encoder.embed_dim = 8;
  cfg.encoder.hidden_dim = 16;
  cfg.encoder.feature_dim = 8;
  Trainer trainer(cfg, classes,
                  std::make_unique<MlpEncoder>(vocab.size(), 8, 16, 8, cfg.seed));
  trainer.set_vocabulary(vocab);

  Batch batch;
  std::vector<int> labels = {0, 0, 1, 1, 2, 2, 0, 1};
  std::vector<std::string> toks = {"o1", "o2", "a1", "a2", "b1", "b2", "o1", "a1"};
  for (std::size_t i = 0; i < toks.size(); ++i) {
    batch.tokens.push_back({0, static_cast<std::uint32_t>(i), vocab.id_of(toks[i])});
    batch.distant.push_back(labels[i]);
  }

  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) losses.push_back(trainer.train_step(batch).total);
  CHECK(losses.back() < losses.front());
  CHECK(losses.back() < 0.8 * losses.front());
  // the trend is downward, not just the endpoints
  double first_half = std::accumulate(losses.begin(), losses.begin() + 25, 0.0);
  double second_half = std::accumulate(losses.begin() + 25, losses.end(), 0.0);
  CHECK(second_half < first_half);
}

TEST_CASE("an all-O batch with high o_ratio keeps every token and is pure CE") {
  auto synth = generate_synthetic(tiny_synth());
  auto data = make_data(synth);
  TrainConfig cfg = synth_train_config();
  cfg.o_ratio = 0.99;
  cfg.compactness_weight = 0.0;
  Trainer trainer(cfg, data.classes, make_encoder(cfg, data.vocab, data.train_store));
  trainer.set_vocabulary(data.vocab);

  // collect sentences with no entity-labeled tokens
  Batch batch;
  for (std::size_t s = 0; s < data.train.sentences.size() && batch.size() < 30; ++s) {
    const auto& sentence = data.train.sentences[s];
    bool all_o = true;
    for (int label : sentence.distant) all_o &= label == 0;
    if (!all_o) continue;
    for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
      batch.tokens.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(i),
                              data.vocab.id_of(sentence.tokens[i])});
      batch.distant.push_back(0);
    }
  }
  REQUIRE(batch.size() > 0);
  auto metrics = trainer.train_step(batch);
  CHECK(metrics.o_tokens == static_cast<long>(batch.size()));
  CHECK(metrics.masked == 0);
  CHECK(metrics.total == doctest::Approx(metrics.ce));
  CHECK(metrics.compactness >= 0.0);
}

TEST_CASE("zero compactness weight makes the total loss the masked CE") {
  auto synth = generate_synthetic(tiny_synth());
  auto data = make_data(synth);
  TrainConfig cfg = synth_train_config();
  cfg.compactness_weight = 0.0;
  Trainer trainer(cfg, data.classes, make_encoder(cfg, data.vocab, data.train_store));
  trainer.set_vocabulary(data.vocab);
  std::vector<std::size_t> order(data.train.sentences.size());
  std::iota(order.begin(), order.end(), 0);
  auto metrics = trainer.train_step(trainer.make_batch(data.train, order, 0, 8));
  CHECK(metrics.total == metrics.ce);
}

TEST_CASE("prototypes move only through the ema rule") {
  auto synth = generate_synthetic(tiny_synth());
  auto data = make_data(synth);
  TrainConfig cfg = synth_train_config();
  Trainer trainer(cfg, data.classes, make_encoder(cfg, data.vocab, data.train_store));
  trainer.set_vocabulary(data.vocab);

  std::vector<std::size_t> order(data.train.sentences.size());
  std::iota(order.begin(), order.end(), 0);
  Batch batch = trainer.make_batch(data.train, order, 0, 6);

  // reproduce the expected bank by hand from the pre-step state
  MatrixXd features = trainer.encoder().forward(batch);
  auto sim = similarity(features, trainer.bank());
  auto partition = partition_by_label(batch.distant, data.classes.size());
  AssignOptions options;
  options.reg_weight = cfg.sinkhorn_reg;
  options.max_iters = cfg.sinkhorn_iters;
  options.o_ratio = cfg.o_ratio;
  options.denoise_o = cfg.dot;
  auto assignment = assign_tokens(sim, trainer.bank(), partition, options);
  PrototypeBank expected = trainer.bank();
  ema_update(expected, features, assignment.assigned, assignment.noise_mask);

  trainer.train_step(batch);
  CHECK(trainer.bank().vectors == expected.vectors);
}

TEST_CASE("perturbing a masked token changes neither loss nor updates") {
  auto cfg_synth = tiny_synth(21);
  cfg_synth.unlabeled_fraction = 0.25;
  auto synth = generate_synthetic(cfg_synth);
  auto data = make_data(synth);
  TrainConfig cfg = synth_train_config();

  // locate a batch with at least one masked token, then perturb that
  // token's stored feature and repeat the identical step
  auto run_once = [&](std::shared_ptr<const FeatureStore> store,
                      std::uint32_t* masked_sentence, std::uint32_t* masked_position) {
    TrainData local = data;
    local.train_store = store;
    Trainer trainer(cfg, local.classes, make_encoder(cfg, local.vocab, local.train_store));
    trainer.set_vocabulary(local.vocab);
    std::vector<std::size_t> order(local.train.sentences.size());
    std::iota(order.begin(), order.end(), 0);
    Batch batch = trainer.make_batch(local.train, order, 0, 12);

    MatrixXd features = trainer.encoder().forward(batch);
    auto sim = similarity(features, trainer.bank());
    auto partition = partition_by_label(batch.distant, local.classes.size());
    AssignOptions options;
    options.reg_weight = cfg.sinkhorn_reg;
    options.max_iters = cfg.sinkhorn_iters;
    options.o_ratio = cfg.o_ratio;
    options.denoise_o = cfg.dot;
    auto assignment = assign_tokens(sim, trainer.bank(), partition, options);
    if (masked_sentence) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (assignment.noise_mask[i] == 0.0) {
          *masked_sentence = batch.tokens[i].sentence;
          *masked_position = batch.tokens[i].position;
          break;
        }
      }
    }
    auto metrics = trainer.train_step(batch);
    return std::make_tuple(metrics.ce, metrics.compactness, trainer.bank().vectors,
                           trainer.encoder().parameters());
  };

  std::uint32_t sentence = 0, position = 0;
  auto base = run_once(data.train_store, &sentence, &position);

  auto perturbed_store = std::make_shared<FeatureStore>(synth.train.store);
  Eigen::VectorXd v = perturbed_store->at(sentence, position);
  v *= 1.02;  // small enough to keep every hard assignment in place
  perturbed_store->put(sentence, position, v);
  auto perturbed = run_once(perturbed_store, nullptr, nullptr);

  CHECK(std::get<0>(base) == std::get<0>(perturbed));
  CHECK(std::get<1>(base) == std::get<1>(perturbed));
  CHECK(std::get<2>(base) == std::get<2>(perturbed));
  CHECK(tensors_equal(std::get<3>(base), std::get<3>(perturbed)));
}

TEST_CASE("checkpoint round trip continues training bit-exactly") {
  auto synth = generate_synthetic(tiny_synth());
  auto data = make_data(synth);
  TrainConfig cfg = synth_train_config();
  Trainer trainer(cfg, data.classes, make_encoder(cfg, data.vocab, data.train_store));
  trainer.set_vocabulary(data.vocab);

  std::vector<std::size_t> order(data.train.sentences.size());
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < 3; ++i)
    trainer.train_step(trainer.make_batch(data.train, order, 4 * i, 4 * i + 4));

  const std::string path = "trainer_roundtrip.bin";
  trainer.save(path);

  Trainer resumed = Trainer::load(path, cfg);
  resumed.use_store(data.train_store);
  CHECK(resumed.step_count() == trainer.step_count());
  CHECK(resumed.bank().vectors == trainer.bank().vectors);
  CHECK(tensors_equal(resumed.encoder().parameters(), trainer.encoder().parameters()));
  CHECK(resumed.vocabulary().size() == trainer.vocabulary().size());

  Batch next = trainer.make_batch(data.train, order, 12, 16);
  auto direct = trainer.train_step(next);
  auto reloaded = resumed.train_step(next);
  CHECK(direct.ce == reloaded.ce);
  CHECK(direct.compactness == reloaded.compactness);
  CHECK(direct.masked == reloaded.masked);
  CHECK(trainer.bank().vectors == resumed.bank().vectors);
  CHECK(tensors_equal(trainer.encoder().parameters(), resumed.encoder().parameters()));
  std::remove(path.c_str());
}

TEST_CASE("predict with planted prototypes is near-perfect and deterministic") {
  auto synth = generate_synthetic(tiny_synth());
  auto data = make_data(synth);
  TrainConfig cfg = synth_train_config();
  Trainer trainer(cfg, data.classes, make_encoder(cfg, data.vocab, data.train_store));
  trainer.set_vocabulary(data.vocab);

  // plant prototypes at the generator's cluster directions
  auto& bank = trainer.bank();
  for (int c = 0; c < data.classes.size(); ++c)
    for (int m = 0; m < bank.per_class; ++m)
      bank.vectors.row(bank.flat_index(c, m)) = synth.direction(c, m).transpose();

  auto predictions = trainer.predict(data.train);
  long correct = 0, total = 0;
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    for (std::size_t i = 0; i < predictions[s].size(); ++i) {
      correct += predictions[s][i] == data.train.sentences[s].gold[i];
      ++total;
    }
  }
  CHECK(static_cast<double>(correct) / total > 0.99);
  CHECK(trainer.predict(data.train) == predictions);
}

TEST_CASE("similarity diagnostic averages per-class best similarities") {
  // two planted prototypes; tokens at known angles
  ClassSet classes({"A"});
  TrainConfig cfg;
  cfg.prototypes_per_class = 1;
  auto store = std::make_shared<FeatureStore>(2);
  // class A tokens: one at cos=0.8, one at cos=0.6 against prototype (1,0)
  store->put(0, 0, Eigen::Vector2d(0.8, 0.6));
  store->put(0, 1, Eigen::Vector2d(0.6, 0.8));
  store->put(0, 2, Eigen::Vector2d(0.0, 1.0));  // an O token
  cfg.encoder.type = "precomputed";
  Trainer trainer(cfg, classes,
                  std::make_unique<PrecomputedEncoder>(store, 2, false, false));
  trainer.bank().vectors.row(0) = Eigen::RowVector2d(0, 1);  // O prototype
  trainer.bank().vectors.row(1) = Eigen::RowVector2d(1, 0);  // A prototype

  Corpus corpus;
  corpus.sentences.push_back({{"t0", "t1", "t2"}, {1, 1, 0}, {1, 1, 0}});
  auto sims = trainer.similarity_diagnostic(corpus);
  CHECK(sims.at(1) == doctest::Approx(0.7));
  CHECK(sims.at(0) == doctest::Approx(1.0));

  // a class with no gold tokens is omitted
  Corpus no_a;
  no_a.sentences.push_back({{"t2"}, {0}, {0}});
  auto only_o = trainer.similarity_diagnostic(no_a);
  CHECK(only_o.count(1) == 0);
}

TEST_CASE("full training runs are deterministic given a seed") {
  auto synth = generate_synthetic(tiny_synth());
  auto data = make_data(synth);
  TrainConfig cfg = synth_train_config();
  cfg.epochs = 2;

  auto run = [&](const std::string& path) {
    std::vector<double> stream;
    auto summary = run_training(
        cfg, data, path, [&](const StepMetrics& m) { stream.push_back(m.total); },
        [&](const EpochMetrics& m) { stream.push_back(m.dev.f1); });
    return std::make_pair(summary, stream);
  };
  auto first = run("det_a.bin");
  auto second = run("det_b.bin");
  CHECK(first.second == second.second);
  CHECK(first.first.best_epoch == second.first.best_epoch);
  CHECK(first.first.test.f1 == second.first.test.f1);

  // the saved best checkpoints are byte-identical
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp("det_a.bin") == slurp("det_b.bin"));
  std::remove("det_a.bin");
  std::remove("det_b.bin");
}

TEST_CASE("training on the separated synthetic set reaches a high dev F1") {
  auto synth = generate_synthetic(tiny_synth());
  auto data = make_data(synth);
  TrainConfig cfg = synth_train_config();
  auto summary = run_training(cfg, data, "smoke_ckpt.bin");
  CHECK(summary.best_dev_f1 > 0.9);
  CHECK(summary.has_test);
  CHECK(summary.test.f1 > 0.9);
  std::remove("smoke_ckpt.bin");
}

TEST_CASE("empty batches are rejected") {
  ClassSet classes({"A"});
  TrainConfig cfg;
  Trainer trainer(cfg, classes, std::make_unique<MlpEncoder>(4, 4, 0, 4, 1));
  CHECK_THROWS_AS(trainer.train_step(Batch{}), input_error);
}
