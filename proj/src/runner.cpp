#include "runner.hpp"

#include <Eigen/Eigenvalues>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "common.hpp"
#include "corpus.hpp"
#include "distant.hpp"
#include "synth.hpp"
#include "trainer.hpp"

namespace mproto {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_known_keys(const json& obj, const std::set<std::string>& known,
                      const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw input_error("unknown " + where + " field '" + it.key() + "'");
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw input_error("config field '" + key + "': wrong type");
  }
}

std::string require_string(const json& obj, const std::string& key) {
  if (!obj.contains(key)) throw input_error("missing required field '" + key + "'");
  if (!obj.at(key).is_string()) throw input_error("field '" + key + "' must be a string");
  return obj.at(key).get<std::string>();
}

fs::path prepare_out_dir(const json& args) {
  fs::path dir = require_string(args, "out_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory: " + dir.string());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write file: " + path.string());
  out << text;
}

void write_json_file(const fs::path& path, const json& value) {
  write_text(path, value.dump(2) + "\n");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_manifest(const fs::path& out_dir, const std::string& command, const json& args,
                    const std::vector<std::string>& input_paths) {
  json manifest;
  manifest["command"] = command;
  manifest["args"] = args;
  manifest["code_version"] = version_string();
  manifest["inputs"] = json::array();
  for (const auto& p : input_paths) {
    json entry;
    entry["path"] = p;
    entry["fnv1a64"] = hex64(fnv1a64_file(p));
    manifest["inputs"].push_back(entry);
  }
  write_json_file(out_dir / "manifest.json", manifest);
}

json scores_to_json(const SpanScores& scores) {
  json out;
  out["precision"] = scores.precision;
  out["recall"] = scores.recall;
  out["f1"] = scores.f1;
  out["loc_f1"] = scores.loc_f1;
  out["cls_f1"] = scores.cls_f1;
  json per_class = json::object();
  for (const auto& [name, sc] : scores.per_class) {
    per_class[name] = {{"precision", sc.precision}, {"recall", sc.recall},
                       {"f1", sc.f1},               {"predicted", sc.predicted},
                       {"gold", sc.gold},           {"matched", sc.matched}};
  }
  out["per_class"] = per_class;
  return out;
}

ColumnSpec column_spec_from(const json& args, int default_distant) {
  ColumnSpec spec;
  spec.token_col = get_or<int>(args, "token_col", 0);
  spec.distant_col = get_or<int>(args, "distant_col", default_distant);
  spec.gold_col = get_or<int>(args, "gold_col", -1);
  return spec;
}

}  // namespace

void apply_override(json& args, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw input_error("override must look like key=value: " + assignment);
  std::string key = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);

  json* node = &args;
  std::size_t start = 0;
  while (true) {
    auto dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw input_error("override has an empty key segment: " + assignment);
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

// ---------------------------------------------------------------------------
// annotate
// ---------------------------------------------------------------------------

json run_annotate(const json& args) {
  check_known_keys(args, {"corpus", "gazetteer", "fraction", "case_insensitive", "token_col",
                          "distant_col", "gold_col", "out_dir"},
                   "annotate");
  const std::string corpus_path = require_string(args, "corpus");
  const std::string gaz_path = require_string(args, "gazetteer");
  const double fraction = get_or<double>(args, "fraction", 1.0);
  const bool case_insensitive = get_or<bool>(args, "case_insensitive", false);
  const fs::path out_dir = prepare_out_dir(args);

  Gazetteer full = Gazetteer::load(gaz_path);
  Gazetteer used = subsample_dictionary(full, fraction);

  ColumnSpec spec = column_spec_from(args, -1);
  auto loaded = load_column_corpus(corpus_path, spec);

  // The class set must cover every gazetteer type, matched or not.
  std::set<std::string> type_names(loaded.classes.names().begin() + 1,
                                   loaded.classes.names().end());
  for (const auto& e : full.entries) type_names.insert(e.type);
  ClassSet classes(std::vector<std::string>(type_names.begin(), type_names.end()));

  Corpus annotated = annotate_corpus(loaded.corpus, used, classes, case_insensitive);
  const fs::path annotated_path = out_dir / "annotated.txt";
  write_column_corpus(annotated_path.string(), annotated, classes);

  json report;
  report["gazetteer_entries_total"] = full.size();
  report["gazetteer_entries_used"] = used.size();
  report["fraction"] = fraction;
  report["sentences"] = annotated.sentences.size();
  report["tokens"] = annotated.token_count();
  if (annotated.has_gold()) report["quality"] = scores_to_json(annotation_quality(annotated, classes));
  write_json_file(out_dir / "quality.json", report);

  write_manifest(out_dir, "annotate", args, {corpus_path, gaz_path});
  report["annotated_corpus"] = annotated_path.string();
  return report;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

namespace {

struct Profile {
  double compactness_weight;
  double ema_ratio;
  double o_ratio;
};

const std::map<std::string, Profile>& profiles() {
  static const std::map<std::string, Profile> table = {
      {"bc5cdr_big_dict", {0.05, 0.9, 0.01}},
      {"bc5cdr_small_dict", {0.1, 0.5, 0.01}},
      {"conll03_kb", {0.05, 0.5, 0.05}},
      {"conll03_dict", {0.01, 0.9, 0.01}},
  };
  return table;
}

TrainConfig parse_train_config(const json& args) {
  check_known_keys(args,
                   {"profile", "seed", "prototypes_per_class", "compactness_weight",
                    "ema_ratio", "o_ratio", "dot", "sinkhorn_reg", "sinkhorn_iters", "peak_lr",
                    "warmup_steps", "total_steps", "weight_decay", "clip_norm", "batch_size",
                    "epochs", "encoder", "data", "out_dir"},
                   "train config");
  TrainConfig cfg;
  if (args.contains("profile")) {
    const std::string name = args.at("profile").get<std::string>();
    auto it = profiles().find(name);
    if (it == profiles().end()) {
      std::string known;
      for (const auto& [k, _] : profiles()) known += (known.empty() ? "" : ", ") + k;
      throw input_error("config field 'profile': unknown profile '" + name +
                        "'; known profiles: " + known);
    }
    cfg.compactness_weight = it->second.compactness_weight;
    cfg.ema_ratio = it->second.ema_ratio;
    cfg.o_ratio = it->second.o_ratio;
  }
  cfg.seed = get_or<std::uint64_t>(args, "seed", cfg.seed);
  cfg.prototypes_per_class = get_or<int>(args, "prototypes_per_class", cfg.prototypes_per_class);
  cfg.compactness_weight = get_or<double>(args, "compactness_weight", cfg.compactness_weight);
  cfg.ema_ratio = get_or<double>(args, "ema_ratio", cfg.ema_ratio);
  cfg.o_ratio = get_or<double>(args, "o_ratio", cfg.o_ratio);
  cfg.dot = get_or<bool>(args, "dot", cfg.dot);
  cfg.sinkhorn_reg = get_or<double>(args, "sinkhorn_reg", cfg.sinkhorn_reg);
  cfg.sinkhorn_iters = get_or<int>(args, "sinkhorn_iters", cfg.sinkhorn_iters);
  cfg.peak_lr = get_or<double>(args, "peak_lr", cfg.peak_lr);
  cfg.warmup_steps = get_or<int>(args, "warmup_steps", cfg.warmup_steps);
  cfg.total_steps = get_or<int>(args, "total_steps", cfg.total_steps);
  cfg.weight_decay = get_or<double>(args, "weight_decay", cfg.weight_decay);
  cfg.clip_norm = get_or<double>(args, "clip_norm", cfg.clip_norm);
  cfg.batch_size = get_or<int>(args, "batch_size", cfg.batch_size);
  cfg.epochs = get_or<int>(args, "epochs", cfg.epochs);
  if (args.contains("encoder")) {
    const json& enc = args.at("encoder");
    check_known_keys(enc,
                     {"type", "embed_dim", "hidden_dim", "feature_dim", "token_offsets",
                      "linear_head"},
                     "encoder config");
    cfg.encoder.type = get_or<std::string>(enc, "type", cfg.encoder.type);
    cfg.encoder.embed_dim = get_or<int>(enc, "embed_dim", cfg.encoder.embed_dim);
    cfg.encoder.hidden_dim = get_or<int>(enc, "hidden_dim", cfg.encoder.hidden_dim);
    cfg.encoder.feature_dim = get_or<int>(enc, "feature_dim", cfg.encoder.feature_dim);
    cfg.encoder.token_offsets = get_or<bool>(enc, "token_offsets", cfg.encoder.token_offsets);
    cfg.encoder.linear_head = get_or<bool>(enc, "linear_head", cfg.encoder.linear_head);
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const TrainConfig& cfg) {
  json out;
  out["seed"] = cfg.seed;
  out["prototypes_per_class"] = cfg.prototypes_per_class;
  out["compactness_weight"] = cfg.compactness_weight;
  out["ema_ratio"] = cfg.ema_ratio;
  out["o_ratio"] = cfg.o_ratio;
  out["dot"] = cfg.dot;
  out["sinkhorn_reg"] = cfg.sinkhorn_reg;
  out["sinkhorn_iters"] = cfg.sinkhorn_iters;
  out["peak_lr"] = cfg.peak_lr;
  out["warmup_steps"] = cfg.warmup_steps;
  out["total_steps"] = cfg.total_steps;
  out["weight_decay"] = cfg.weight_decay;
  out["clip_norm"] = cfg.clip_norm;
  out["batch_size"] = cfg.batch_size;
  out["epochs"] = cfg.epochs;
  out["encoder"] = {{"type", cfg.encoder.type}};
  if (cfg.encoder.type == "mlp") {
    out["encoder"]["embed_dim"] = cfg.encoder.embed_dim;
    out["encoder"]["hidden_dim"] = cfg.encoder.hidden_dim;
    out["encoder"]["feature_dim"] = cfg.encoder.feature_dim;
  } else {
    out["encoder"]["token_offsets"] = cfg.encoder.token_offsets;
    out["encoder"]["linear_head"] = cfg.encoder.linear_head;
  }
  return out;
}

struct DataArgs {
  std::string train, dev, test;
  std::string train_features, dev_features, test_features;
  ColumnSpec spec;
};

DataArgs parse_data_args(const json& args) {
  if (!args.contains("data")) throw input_error("missing required field 'data'");
  const json& d = args.at("data");
  check_known_keys(d,
                   {"train", "dev", "test", "train_features", "dev_features", "test_features",
                    "token_col", "distant_col", "gold_col"},
                   "data config");
  DataArgs out;
  out.train = require_string(d, "train");
  out.dev = get_or<std::string>(d, "dev", "");
  out.test = get_or<std::string>(d, "test", "");
  out.train_features = get_or<std::string>(d, "train_features", "");
  out.dev_features = get_or<std::string>(d, "dev_features", "");
  out.test_features = get_or<std::string>(d, "test_features", "");
  out.spec = column_spec_from(d, 1);
  return out;
}

TrainData load_train_data(const DataArgs& paths) {
  TrainData data;
  std::set<std::string> entity_names;
  auto discover = [&](const std::string& path) {
    if (path.empty()) return;
    auto loaded = load_column_corpus(path, paths.spec);
    for (const auto& name : loaded.classes.names())
      if (name != "O") entity_names.insert(name);
  };
  discover(paths.train);
  discover(paths.dev);
  discover(paths.test);
  data.classes = ClassSet(std::vector<std::string>(entity_names.begin(), entity_names.end()));

  data.train = load_column_corpus(paths.train, paths.spec, data.classes);
  if (!paths.dev.empty()) data.dev = load_column_corpus(paths.dev, paths.spec, data.classes);
  if (!paths.test.empty()) data.test = load_column_corpus(paths.test, paths.spec, data.classes);

  for (const auto& s : data.train.sentences)
    for (const auto& t : s.tokens) data.vocab.add(t);

  auto load_store = [](const std::string& path) -> std::shared_ptr<const FeatureStore> {
    if (path.empty()) return nullptr;
    return std::make_shared<FeatureStore>(FeatureStore::load(path));
  };
  data.train_store = load_store(paths.train_features);
  data.dev_store = load_store(paths.dev_features);
  data.test_store = load_store(paths.test_features);
  return data;
}

json step_to_json(const StepMetrics& m) {
  json out;
  out["type"] = "step";
  out["step"] = m.step;
  out["lr"] = m.learning_rate;
  out["ce"] = m.ce;
  out["compactness"] = m.compactness;
  out["loss"] = m.total;
  out["tokens"] = m.tokens;
  out["o_tokens"] = m.o_tokens;
  out["masked"] = m.masked;
  return out;
}

json epoch_to_json(const EpochMetrics& m) {
  json out;
  out["type"] = "epoch";
  out["epoch"] = m.epoch;
  out["steps"] = m.steps_done;
  if (m.has_dev) {
    out["dev"] = scores_to_json(m.dev);
    out["best"] = m.is_best;
  }
  if (!m.class_similarity.empty()) {
    json sims = json::object();
    for (const auto& [name, value] : m.class_similarity) sims[name] = value;
    out["similarity"] = sims;
  }
  return out;
}

}  // namespace

json run_train(const json& args) {
  TrainConfig cfg = parse_train_config(args);
  DataArgs paths = parse_data_args(args);
  const fs::path out_dir = prepare_out_dir(args);

  TrainData data = load_train_data(paths);

  const fs::path metrics_path = out_dir / "metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::binary);
  if (!metrics) throw io_error("cannot write metrics stream: " + metrics_path.string());

  const fs::path checkpoint_path = out_dir / "checkpoint.bin";
  auto summary = run_training(
      cfg, data, checkpoint_path.string(),
      [&](const StepMetrics& m) { metrics << step_to_json(m).dump() << "\n"; },
      [&](const EpochMetrics& m) { metrics << epoch_to_json(m).dump() << "\n"; });

  json result;
  result["best_epoch"] = summary.best_epoch;
  result["best_dev_f1"] = summary.best_dev_f1;
  result["steps"] = summary.steps;
  if (summary.has_test) result["test"] = scores_to_json(summary.test);
  metrics << json({{"type", "final"},
                   {"best_epoch", summary.best_epoch},
                   {"best_dev_f1", summary.best_dev_f1},
                   {"steps", summary.steps}})
                 .dump()
          << "\n";
  metrics.close();

  data.vocab.save((out_dir / "vocab.txt").string());
  write_json_file(out_dir / "config.json", config_to_json(cfg));

  std::vector<std::string> inputs = {paths.train};
  for (const auto& p : {paths.dev, paths.test, paths.train_features, paths.dev_features,
                        paths.test_features})
    if (!p.empty()) inputs.push_back(p);
  write_manifest(out_dir, "train", args, inputs);

  result["checkpoint"] = checkpoint_path.string();
  result["metrics"] = metrics_path.string();
  return result;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

namespace {

// Loads a checkpoint plus the corpus it is to be applied to, validating the
// corpus labels against the checkpoint classes.
struct EvalSetup {
  Trainer trainer;
  Corpus corpus;
};

EvalSetup load_eval_setup(const json& args) {
  const std::string checkpoint = require_string(args, "checkpoint");
  const std::string corpus_path = require_string(args, "corpus");
  TrainConfig base;
  Trainer trainer = Trainer::load(checkpoint, base);
  ColumnSpec spec = column_spec_from(args, get_or<int>(args, "distant_col", -1));
  Corpus corpus = load_column_corpus(corpus_path, spec, trainer.classes());
  if (corpus.sentences.empty()) throw input_error("corpus is empty: " + corpus_path);
  const std::string features = get_or<std::string>(args, "features", "");
  if (!features.empty())
    trainer.use_store(std::make_shared<FeatureStore>(FeatureStore::load(features)));
  return {std::move(trainer), std::move(corpus)};
}

}  // namespace

json run_eval(const json& args) {
  check_known_keys(args, {"checkpoint", "corpus", "features", "token_col", "distant_col",
                          "gold_col", "out_dir"},
                   "eval");
  const fs::path out_dir = prepare_out_dir(args);
  auto setup = load_eval_setup(args);

  auto predictions = setup.trainer.predict(setup.corpus);
  Corpus predicted = setup.corpus;
  for (std::size_t i = 0; i < predicted.sentences.size(); ++i) {
    predicted.sentences[i].distant = predictions[i];
    predicted.sentences[i].gold.clear();
  }
  const fs::path pred_path = out_dir / "predictions.txt";
  write_column_corpus(pred_path.string(), predicted, setup.trainer.classes());

  json result;
  result["sentences"] = setup.corpus.sentences.size();
  result["tokens"] = setup.corpus.token_count();
  result["predictions"] = pred_path.string();
  if (setup.corpus.has_gold()) {
    std::vector<std::vector<int>> gold;
    for (const auto& s : setup.corpus.sentences) gold.push_back(s.gold);
    result["metrics"] = scores_to_json(span_f1(predictions, gold, setup.trainer.classes()));
    write_json_file(out_dir / "metrics.json", result["metrics"]);
  }

  std::vector<std::string> inputs = {require_string(args, "checkpoint"),
                                     require_string(args, "corpus")};
  if (args.contains("features")) inputs.push_back(args.at("features").get<std::string>());
  write_manifest(out_dir, "eval", args, inputs);
  return result;
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

namespace {

// Principal 2-D projection of the row union, for plotting feature dumps.
Eigen::MatrixXd pca_2d(const Eigen::MatrixXd& rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, rows.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(d, 2);
  basis.col(0) = solver.eigenvectors().col(d - 1);
  if (d >= 2) basis.col(1) = solver.eigenvectors().col(d - 2);
  return centered * basis;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

json run_diagnose(const json& args) {
  check_known_keys(args, {"checkpoint", "corpus", "features", "which", "token_col",
                          "distant_col", "gold_col", "out_dir", "o_ratio", "sinkhorn_reg",
                          "sinkhorn_iters", "dot"},
                   "diagnose");
  const std::string which = require_string(args, "which");
  if (which != "features" && which != "transport" && which != "similarity")
    throw input_error("diagnose 'which' must be features, transport or similarity");
  const fs::path out_dir = prepare_out_dir(args);
  auto setup = load_eval_setup(args);
  Trainer& trainer = setup.trainer;
  const Corpus& corpus = setup.corpus;
  const ClassSet& classes = trainer.classes();

  json result;
  if (which == "features") {
    // All token features plus the prototypes, with a shared 2-D projection.
    Batch batch;
    std::vector<std::size_t> order(corpus.sentences.size());
    std::iota(order.begin(), order.end(), 0);
    batch = trainer.make_batch(corpus, order, 0, order.size());
    Eigen::MatrixXd features = trainer.encoder().forward(batch);
    const auto& bank = trainer.bank();
    Eigen::MatrixXd rows(features.rows() + bank.vectors.rows(), features.cols());
    rows << features, bank.vectors;
    Eigen::MatrixXd projected = pca_2d(rows);

    std::ostringstream csv;
    csv << "kind,sentence,position,token,distant,gold,class,prototype,pc1,pc2";
    for (int d = 0; d < bank.dim; ++d) csv << ",f" << d;
    csv << "\n";
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      const auto& ref = batch.tokens[static_cast<std::size_t>(i)];
      const auto& sentence = corpus.sentences[ref.sentence];
      csv << "token," << ref.sentence << ',' << ref.position << ','
          << csv_escape(sentence.tokens[ref.position]) << ','
          << classes.name(sentence.distant[ref.position]) << ','
          << (sentence.has_gold() ? classes.name(sentence.gold[ref.position]) : "") << ",,,"
          << dtos(projected(i, 0)) << ',' << dtos(projected(i, 1));
      for (int d = 0; d < bank.dim; ++d) csv << ',' << dtos(features(i, d));
      csv << "\n";
    }
    for (Eigen::Index p = 0; p < bank.vectors.rows(); ++p) {
      const Eigen::Index row = features.rows() + p;
      csv << "prototype,,,,,," << classes.name(bank.class_of(static_cast<int>(p))) << ','
          << static_cast<int>(p) % bank.per_class << ',' << dtos(projected(row, 0)) << ','
          << dtos(projected(row, 1));
      for (int d = 0; d < bank.dim; ++d) csv << ',' << dtos(bank.vectors(p, d));
      csv << "\n";
    }
    write_text(out_dir / "features.csv", csv.str());
    result["rows"] = static_cast<long>(rows.rows());
    result["artifact"] = (out_dir / "features.csv").string();
  } else if (which == "transport") {
    Eigen::MatrixXi counts = trainer.transport_diagnostic(corpus);
    std::ostringstream csv;
    csv << "gold_class";
    for (int c = 0; c < classes.size(); ++c) csv << ',' << classes.name(c);
    csv << "\n";
    for (int r = 0; r < classes.size(); ++r) {
      csv << classes.name(r);
      for (int c = 0; c < classes.size(); ++c) csv << ',' << counts(r, c);
      csv << "\n";
    }
    write_text(out_dir / "transport.csv", csv.str());
    long total = counts.sum();
    result["unlabeled_entity_tokens"] = total;
    result["artifact"] = (out_dir / "transport.csv").string();
  } else {
    auto sims = trainer.similarity_diagnostic(corpus);
    std::map<int, long> counts;
    for (const auto& s : corpus.sentences)
      for (int g : s.gold) counts[g]++;
    std::ostringstream csv;
    csv << "class,tokens,mean_max_similarity\n";
    json values = json::object();
    for (const auto& [cls, value] : sims) {
      csv << classes.name(cls) << ',' << counts[cls] << ',' << dtos(value) << "\n";
      values[classes.name(cls)] = value;
    }
    write_text(out_dir / "similarity.csv", csv.str());
    result["similarity"] = values;
    result["artifact"] = (out_dir / "similarity.csv").string();
  }

  std::vector<std::string> inputs = {require_string(args, "checkpoint"),
                                     require_string(args, "corpus")};
  if (args.contains("features")) inputs.push_back(args.at("features").get<std::string>());
  write_manifest(out_dir, "diagnose", args, inputs);
  return result;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

json run_synth(const json& args) {
  check_known_keys(args,
                   {"entity_classes", "sub_clusters", "feature_dim", "min_separation_deg",
                    "noise", "entity_tokens_per_cluster", "o_tokens_per_cluster",
                    "strings_per_cluster", "max_entity_len", "sentence_target_len",
                    "unlabeled_fraction", "train_fraction", "dev_fraction", "seed", "out_dir"},
                   "synth config");
  SynthConfig cfg;
  if (args.contains("entity_classes"))
    cfg.entity_classes = args.at("entity_classes").get<std::vector<std::string>>();
  cfg.sub_clusters = get_or<int>(args, "sub_clusters", cfg.sub_clusters);
  cfg.feature_dim = get_or<int>(args, "feature_dim", cfg.feature_dim);
  cfg.min_separation_deg = get_or<double>(args, "min_separation_deg", cfg.min_separation_deg);
  cfg.noise = get_or<double>(args, "noise", cfg.noise);
  cfg.entity_tokens_per_cluster =
      get_or<int>(args, "entity_tokens_per_cluster", cfg.entity_tokens_per_cluster);
  cfg.o_tokens_per_cluster = get_or<int>(args, "o_tokens_per_cluster", cfg.o_tokens_per_cluster);
  cfg.strings_per_cluster = get_or<int>(args, "strings_per_cluster", cfg.strings_per_cluster);
  cfg.max_entity_len = get_or<int>(args, "max_entity_len", cfg.max_entity_len);
  cfg.sentence_target_len = get_or<int>(args, "sentence_target_len", cfg.sentence_target_len);
  cfg.unlabeled_fraction = get_or<double>(args, "unlabeled_fraction", cfg.unlabeled_fraction);
  cfg.train_fraction = get_or<double>(args, "train_fraction", cfg.train_fraction);
  cfg.dev_fraction = get_or<double>(args, "dev_fraction", cfg.dev_fraction);
  cfg.seed = get_or<std::uint64_t>(args, "seed", cfg.seed);

  const fs::path out_dir = prepare_out_dir(args);
  SynthOutput out = generate_synthetic(cfg);

  auto dump_split = [&](const SynthSplit& split, const std::string& name) {
    write_column_corpus((out_dir / (name + ".txt")).string(), split.corpus, out.classes);
    split.store.save((out_dir / (name + ".features")).string());
  };
  dump_split(out.train, "train");
  dump_split(out.dev, "dev");
  dump_split(out.test, "test");

  json meta;
  meta["classes"] = out.classes.names();
  meta["entity_tokens"] = out.entity_tokens;
  meta["flipped_tokens"] = out.flipped_tokens;
  meta["unlabeled_strings"] = out.unlabeled_strings;
  meta["sub_clusters"] = cfg.sub_clusters;
  meta["feature_dim"] = cfg.feature_dim;
  json dirs = json::array();
  for (Eigen::Index r = 0; r < out.directions.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < out.directions.cols(); ++c) row.push_back(out.directions(r, c));
    dirs.push_back(row);
  }
  meta["directions"] = dirs;
  meta["splits"] = {{"train", out.train.corpus.sentences.size()},
                    {"dev", out.dev.corpus.sentences.size()},
                    {"test", out.test.corpus.sentences.size()}};
  write_json_file(out_dir / "synth.json", meta);

  write_manifest(out_dir, "synth", args, {});

  json result;
  result["train"] = (out_dir / "train.txt").string();
  result["dev"] = (out_dir / "dev.txt").string();
  result["test"] = (out_dir / "test.txt").string();
  result["entity_tokens"] = out.entity_tokens;
  result["flipped_tokens"] = out.flipped_tokens;
  result["sentences"] = out.train.corpus.sentences.size() + out.dev.corpus.sentences.size() +
                        out.test.corpus.sentences.size();
  return result;
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

json run_replay(const std::string& manifest_path, const std::string& out_dir) {
  std::ifstream in(manifest_path);
  if (!in) throw io_error("cannot open manifest: " + manifest_path);
  json manifest = json::parse(in, nullptr, false);
  if (manifest.is_discarded()) throw io_error(manifest_path + ": not valid JSON");
  if (!manifest.contains("command") || !manifest.contains("args"))
    throw input_error(manifest_path + ": manifest lacks command/args");
  const std::string command = manifest.at("command").get<std::string>();
  json args = manifest.at("args");
  args["out_dir"] = out_dir;
  if (command == "annotate") return run_annotate(args);
  if (command == "train") return run_train(args);
  if (command == "eval") return run_eval(args);
  if (command == "diagnose") return run_diagnose(args);
  if (command == "synth") return run_synth(args);
  throw input_error(manifest_path + ": unknown command '" + command + "'");
}

}  // namespace mproto
