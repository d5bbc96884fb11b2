#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "common.hpp"

namespace mproto {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::MatrixXd draw_directions(int count, int dim, double min_separation_deg,
                                std::mt19937_64& rng) {
  const double cos_limit = std::cos(min_separation_deg * kPi / 180.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd dirs(count, dim);
  for (int restart = 0; restart < 64; ++restart) {
    int placed = 0;
    bool stuck = false;
    while (placed < count && !stuck) {
      bool ok = false;
      for (int attempt = 0; attempt < 4000 && !ok; ++attempt) {
        Eigen::VectorXd v(dim);
        for (int d = 0; d < dim; ++d) v[d] = gauss(rng);
        double norm = v.norm();
        if (norm < 1e-12) continue;
        v /= norm;
        ok = true;
        for (int p = 0; p < placed && ok; ++p)
          ok = dirs.row(p).dot(v.transpose()) <= cos_limit;
        if (ok) dirs.row(placed++) = v.transpose();
      }
      if (!ok) stuck = true;
    }
    if (placed == count) return dirs;
  }
  throw input_error("cannot place " + std::to_string(count) + " cluster directions in " +
                    std::to_string(dim) + " dimensions with separation >= " +
                    dtos(min_separation_deg) + " degrees");
}

struct Occurrence {
  int cls = 0;       // class index, 0 = O
  int cluster = 0;   // sub-cluster within the class
  std::string text;
};

struct PendingEntity {
  int cls = 0;
  int cluster = 0;
  std::string text;
  int length = 1;
};

}  // namespace

const Eigen::VectorXd SynthOutput::direction(int cls, int cluster) const {
  const int s = static_cast<int>(directions.rows()) / classes.size();
  return directions.row(cls * s + cluster).transpose();
}

SynthOutput generate_synthetic(const SynthConfig& config) {
  if (config.entity_classes.empty())
    throw input_error("synthetic config: need at least one entity class");
  if (config.sub_clusters < 1) throw input_error("synthetic config: sub_clusters must be >= 1");
  if (config.feature_dim < 2) throw input_error("synthetic config: feature_dim must be >= 2");
  if (!(config.min_separation_deg > 0.0))
    throw input_error("synthetic config: min_separation_deg must be positive");
  if (config.noise < 0.0) throw input_error("synthetic config: noise must be nonnegative");
  if (config.unlabeled_fraction < 0.0 || config.unlabeled_fraction >= 1.0)
    throw input_error("synthetic config: unlabeled_fraction must lie in [0, 1)");
  if (config.strings_per_cluster < 1 || config.entity_tokens_per_cluster < 1 ||
      config.o_tokens_per_cluster < 0 || config.max_entity_len < 1)
    throw input_error("synthetic config: counts must be positive");
  const double test_fraction = 1.0 - config.train_fraction - config.dev_fraction;
  if (config.train_fraction <= 0.0 || config.dev_fraction < 0.0 || test_fraction < -1e-12)
    throw input_error("synthetic config: split fractions must sum to at most 1");

  SynthOutput out;
  out.classes = ClassSet(config.entity_classes);
  const int K = out.classes.size();
  const int S = config.sub_clusters;

  std::mt19937_64 rng(config.seed);
  out.directions = draw_directions(K * S, config.feature_dim, config.min_separation_deg, rng);

  // Surface-form pools, one per (class, sub-cluster).
  auto pool_name = [&](int cls, int cluster, int i) {
    std::string base = out.classes.name(cls);
    std::transform(base.begin(), base.end(), base.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return base + std::to_string(cluster) + "_" + std::to_string(i);
  };

  // Entity occurrences grouped into spans that repeat one surface form.
  std::vector<PendingEntity> entities;
  std::uniform_int_distribution<int> len_dist(1, config.max_entity_len);
  for (int c = 1; c < K; ++c) {
    for (int s = 0; s < S; ++s) {
      int remaining = config.entity_tokens_per_cluster;
      int next_string = 0;
      while (remaining > 0) {
        PendingEntity e;
        e.cls = c;
        e.cluster = s;
        e.length = std::min(len_dist(rng), remaining);
        e.text = pool_name(c, s, next_string % config.strings_per_cluster);
        ++next_string;
        remaining -= e.length;
        entities.push_back(std::move(e));
      }
    }
  }
  std::shuffle(entities.begin(), entities.end(), rng);

  // O-token budget per sub-cluster.
  std::vector<int> o_remaining(static_cast<std::size_t>(S), config.o_tokens_per_cluster);
  long o_total = static_cast<long>(S) * config.o_tokens_per_cluster;
  std::vector<int> o_next_string(static_cast<std::size_t>(S), 0);
  auto draw_o_token = [&](std::mt19937_64& r) -> Occurrence {
    std::vector<int> live;
    for (int s = 0; s < S; ++s)
      if (o_remaining[static_cast<std::size_t>(s)] > 0) live.push_back(s);
    int s = live[std::uniform_int_distribution<std::size_t>(0, live.size() - 1)(r)];
    o_remaining[static_cast<std::size_t>(s)]--;
    --o_total;
    int i = o_next_string[static_cast<std::size_t>(s)]++ % config.strings_per_cluster;
    return {0, s, pool_name(0, s, i)};
  };

  // Sentence assembly: O runs alternate with entities; a sentence break is
  // forced instead of letting two same-class entities touch (plain tagging
  // would merge them into one span).
  struct DraftToken {
    Occurrence occ;
    int gold = 0;
  };
  std::vector<std::vector<DraftToken>> drafts;
  std::size_t next_entity = 0;
  std::uniform_int_distribution<int> run_dist(1, 3);
  while (next_entity < entities.size() || o_total > 0) {
    std::vector<DraftToken> sentence;
    int last_entity_cls = -1;
    while (static_cast<int>(sentence.size()) < config.sentence_target_len &&
           (next_entity < entities.size() || o_total > 0)) {
      if (o_total > 0) {
        int run = std::min<long>(run_dist(rng), o_total);
        for (int i = 0; i < run; ++i) {
          auto occ = draw_o_token(rng);
          sentence.push_back({occ, 0});
        }
        last_entity_cls = -1;
      }
      if (next_entity < entities.size()) {
        const auto& e = entities[next_entity];
        if (e.cls == last_entity_cls) break;  // would merge with the previous span
        for (int i = 0; i < e.length; ++i)
          sentence.push_back({{e.cls, e.cluster, e.text}, e.cls});
        last_entity_cls = e.cls;
        ++next_entity;
      }
    }
    if (!sentence.empty()) drafts.push_back(std::move(sentence));
  }

  // Incomplete labeling: flip whole surface forms (every occurrence) until
  // the flipped token mass is as close as possible to the requested
  // fraction, class by class.
  std::map<std::string, long> string_tokens;   // entity surface form -> token count
  std::map<std::string, int> string_class;
  long entity_token_total = 0;
  for (const auto& sentence : drafts) {
    for (const auto& tok : sentence) {
      if (tok.gold == 0) continue;
      ++entity_token_total;
      string_tokens[tok.occ.text]++;
      string_class[tok.occ.text] = tok.gold;
    }
  }
  out.entity_tokens = static_cast<std::size_t>(entity_token_total);

  std::vector<std::string> flipped;
  if (config.unlabeled_fraction > 0.0) {
    for (int c = 1; c < K; ++c) {
      std::vector<std::string> pool;
      long class_total = 0;
      for (const auto& [text, count] : string_tokens) {
        if (string_class[text] != c) continue;
        pool.push_back(text);
        class_total += count;
      }
      std::shuffle(pool.begin(), pool.end(), rng);
      const double target = config.unlabeled_fraction * static_cast<double>(class_total);
      long running = 0;
      for (const auto& text : pool) {
        const long count = string_tokens[text];
        if (std::abs(static_cast<double>(running + count) - target) >=
            std::abs(static_cast<double>(running) - target))
          continue;
        running += count;
        flipped.push_back(text);
      }
      out.flipped_tokens += static_cast<std::size_t>(running);
    }
  }
  std::sort(flipped.begin(), flipped.end());
  out.unlabeled_strings = flipped;
  auto is_flipped = [&](const std::string& text) {
    return std::binary_search(flipped.begin(), flipped.end(), text);
  };

  // Split sentences, then draw features split by split so each store is
  // keyed by the sentence's index within its own split.
  std::vector<std::size_t> order(drafts.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = drafts.size();
  const auto n_train = static_cast<std::size_t>(std::lround(config.train_fraction * n));
  const auto n_dev = static_cast<std::size_t>(std::lround(config.dev_fraction * n));
  if (n_train == 0 || n_train + n_dev > n)
    throw input_error("synthetic config: split fractions leave an empty split");

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> magnitude(0.8, 1.25);
  auto emit = [&](SynthSplit& split, std::size_t begin, std::size_t end) {
    split.store = FeatureStore(config.feature_dim);
    for (std::size_t k = begin; k < end; ++k) {
      const auto& draft = drafts[order[k]];
      Sentence s;
      const auto sid = static_cast<std::uint32_t>(split.corpus.sentences.size());
      for (std::size_t i = 0; i < draft.size(); ++i) {
        const auto& tok = draft[i];
        s.tokens.push_back(tok.occ.text);
        s.gold.push_back(tok.gold);
        s.distant.push_back(tok.gold != 0 && is_flipped(tok.occ.text) ? 0 : tok.gold);
        Eigen::VectorXd f = out.direction(tok.occ.cls, tok.occ.cluster);
        for (int d = 0; d < config.feature_dim; ++d) f[d] += config.noise * gauss(rng);
        f.normalize();
        f *= magnitude(rng);
        split.store.put(sid, static_cast<std::uint32_t>(i), f);
      }
      split.corpus.sentences.push_back(std::move(s));
    }
  };
  emit(out.train, 0, n_train);
  emit(out.dev, n_train, n_train + n_dev);
  emit(out.test, n_train + n_dev, n);
  return out;
}

}  // namespace mproto
