#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "common.hpp"
#include "corpus.hpp"
#include "distant.hpp"

using namespace mproto;

namespace {

Gazetteer news_gazetteer() {
  return Gazetteer::load(MPROTO_FIXTURE_DIR "/news_gazetteer.txt");
}

LoadedCorpus news_corpus() {
  // token + gold columns; distant labels come from matching
  return load_column_corpus(MPROTO_FIXTURE_DIR "/news_corpus.txt", {0, -1, 1});
}

}  // namespace

TEST_CASE("gazetteer file parsing") {
  auto gaz = news_gazetteer();
  CHECK(gaz.size() == 10);
  CHECK(gaz.entries[0].type == "PER");
  CHECK(gaz.entries[0].surface == std::vector<std::string>{"John", "Smith"});
  CHECK(gaz.entries[5].surface == std::vector<std::string>{"New", "York", "City"});
  CHECK_THROWS_AS(Gazetteer::load("no_such_gazetteer.txt"), io_error);
}

TEST_CASE("single exact match labels only its tokens") {
  Gazetteer gaz;
  gaz.entries.push_back({{"John"}, "PER"});
  auto labels = dict_match({"John", "lives", "in", "Paris"}, gaz, false);
  CHECK(labels == std::vector<std::string>{"PER", "O", "O", "O"});
}

TEST_CASE("longest match wins over a shorter prefix entry") {
  Gazetteer gaz;
  gaz.entries.push_back({{"New", "York"}, "LOC"});
  gaz.entries.push_back({{"New", "York", "City"}, "LOC"});
  auto labels = dict_match({"I", "saw", "New", "York", "City"}, gaz, false);
  CHECK(labels == std::vector<std::string>{"O", "O", "LOC", "LOC", "LOC"});
}

TEST_CASE("left-to-right greediness blocks overlapping candidates") {
  Gazetteer gaz;
  gaz.entries.push_back({{"A", "B"}, "X"});
  gaz.entries.push_back({{"B", "C"}, "Y"});
  auto labels = dict_match({"A", "B", "C"}, gaz, false);
  CHECK(labels == std::vector<std::string>{"X", "X", "O"});
}

TEST_CASE("equal-length candidates go to the earliest entry") {
  Gazetteer gaz;
  gaz.entries.push_back({{"Acme"}, "ORG"});
  gaz.entries.push_back({{"Acme"}, "PER"});
  auto labels = dict_match({"Acme"}, gaz, false);
  CHECK(labels == std::vector<std::string>{"ORG"});
}

TEST_CASE("case folding is opt-in") {
  Gazetteer gaz;
  gaz.entries.push_back({{"Paris"}, "LOC"});
  CHECK(dict_match({"paris"}, gaz, false) == std::vector<std::string>{"O"});
  CHECK(dict_match({"paris"}, gaz, true) == std::vector<std::string>{"LOC"});
  CHECK(dict_match({"PARIS"}, gaz, true) == std::vector<std::string>{"LOC"});
}

TEST_CASE("matching is idempotent and labels only covered tokens") {
  auto gaz = news_gazetteer();
  std::vector<std::string> tokens = {"Mary", "met", "John", "Smith", "near", "Berlin"};
  auto once = dict_match(tokens, gaz, false);
  auto twice = dict_match(tokens, gaz, false);
  CHECK(once == twice);
  CHECK(once == std::vector<std::string>{"PER", "O", "PER", "PER", "O", "LOC"});
}

TEST_CASE("subsampling keeps a ceiling prefix") {
  auto gaz = news_gazetteer();
  CHECK(subsample_dictionary(gaz, 0.2).size() == 2);
  CHECK(subsample_dictionary(gaz, 1.0).size() == 10);
  CHECK(subsample_dictionary(gaz, 0.55).size() == 6);  // ceil(5.5)

  Gazetteer five;
  for (int i = 0; i < 5; ++i) five.entries.push_back({{"t" + std::to_string(i)}, "X"});
  CHECK(subsample_dictionary(five, 0.5).size() == 3);  // ceil(2.5)
  CHECK(subsample_dictionary(five, 0.5).entries[0].surface[0] == "t0");

  CHECK_THROWS_AS(subsample_dictionary(gaz, 0.0), input_error);
  CHECK_THROWS_AS(subsample_dictionary(gaz, 1.5), input_error);
}

TEST_CASE("annotation quality equals the hand-scored values per fraction") {
  auto gaz = news_gazetteer();
  auto loaded = news_corpus();

  // fraction -> (precision, recall), scored by hand against the fixture
  const std::vector<std::pair<double, std::pair<double, double>>> expected = {
      {1.0, {0.9, 0.9}},
      {0.8, {0.875, 0.7}},
      {0.6, {1.0, 0.6}},
      {0.4, {1.0, 0.4}},
      {0.2, {1.0, 0.2}},
  };
  double previous_recall = 1.0;
  for (const auto& [fraction, scores] : expected) {
    auto sub = subsample_dictionary(gaz, fraction);
    auto annotated = annotate_corpus(loaded.corpus, sub, loaded.classes, false);
    auto quality = annotation_quality(annotated, loaded.classes);
    CAPTURE(fraction);
    CHECK(quality.precision == doctest::Approx(scores.first).epsilon(1e-12));
    CHECK(quality.recall == doctest::Approx(scores.second).epsilon(1e-12));
    CHECK(quality.recall <= previous_recall + 1e-12);
    previous_recall = quality.recall;
  }
}

TEST_CASE("distant equal to gold scores perfectly; empty distant scores zero") {
  auto loaded = news_corpus();
  Corpus perfect = loaded.corpus;
  for (auto& s : perfect.sentences) s.distant = s.gold;
  auto scores = annotation_quality(perfect, loaded.classes);
  CHECK(scores.precision == 1.0);
  CHECK(scores.recall == 1.0);
  CHECK(scores.f1 == 1.0);

  Corpus silent = loaded.corpus;
  for (auto& s : silent.sentences) s.distant.assign(s.tokens.size(), 0);
  auto none = annotation_quality(silent, loaded.classes);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
}

TEST_CASE("three-sentence hand-scored quality oracle") {
  // One missed span and one spurious span:
  //   gold spans: (0,1,A) s0; (1,3,B) s1; none s2        -> 2 gold
  //   distant:    (0,1,A) s0; none s1; (0,1,A) s2        -> 2 predicted, 1 correct
  ClassSet classes({"A", "B"});
  Corpus corpus;
  corpus.sentences.push_back({{"x", "y"}, {1, 0}, {1, 0}});
  corpus.sentences.push_back({{"p", "q", "r"}, {0, 0, 0}, {0, 2, 2}});
  corpus.sentences.push_back({{"u", "v"}, {1, 0}, {0, 0}});
  auto scores = annotation_quality(corpus, classes);
  CHECK(scores.precision == doctest::Approx(0.5));
  CHECK(scores.recall == doctest::Approx(0.5));
  CHECK(scores.f1 == doctest::Approx(0.5));
}

TEST_CASE("annotated corpus matches the hand-traced golden file") {
  auto gaz = news_gazetteer();
  auto loaded = news_corpus();
  auto annotated = annotate_corpus(loaded.corpus, gaz, loaded.classes, false);
  const std::string out_path = "annotated_check.txt";
  write_column_corpus(out_path, annotated, loaded.classes);

  auto slurp = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(out_path) == slurp(MPROTO_FIXTURE_DIR "/news_annotated_golden.txt"));
  std::remove(out_path.c_str());
}

TEST_CASE("shrinking the gazetteer never raises recall on random prefixes") {
  auto gaz = news_gazetteer();
  auto loaded = news_corpus();
  double previous = 1.0;
  for (int keep = 10; keep >= 1; --keep) {
    auto sub = subsample_dictionary(gaz, keep / 10.0);
    auto annotated = annotate_corpus(loaded.corpus, sub, loaded.classes, false);
    auto quality = annotation_quality(annotated, loaded.classes);
    CHECK(quality.recall <= previous + 1e-12);
    previous = quality.recall;
  }
}
