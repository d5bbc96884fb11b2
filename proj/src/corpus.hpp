#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mproto {

// Label inventory. Index 0 is always the non-entity class "O"; entity
// classes follow in sorted name order so that indices are stable across
// files of the same dataset.
class ClassSet {
 public:
  ClassSet() { names_ = {"O"}; }
  explicit ClassSet(std::vector<std::string> entity_names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
  const std::vector<std::string>& names() const { return names_; }
  // -1 when unknown.
  int index_of(const std::string& name) const;
  bool operator==(const ClassSet& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
};

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<int> distant;  // class index per token
  std::vector<int> gold;     // empty when no human annotation
  bool has_gold() const { return !gold.empty(); }
};

struct Corpus {
  std::vector<Sentence> sentences;
  std::size_t token_count() const;
  bool has_gold() const;
};

// Half-open token span with an entity class (> 0).
struct Span {
  int begin = 0;
  int end = 0;
  int cls = 0;
  bool operator==(const Span& o) const = default;
  auto operator<=>(const Span& o) const = default;
};

// Maximal runs of identical non-O labels.
std::vector<Span> decode_spans(const std::vector<int>& labels);

// Inverse of decode_spans for well-formed span sets (test / output helper).
std::vector<int> paint_spans(const std::vector<Span>& spans, int length);

struct PerClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long predicted = 0;
  long gold = 0;
  long matched = 0;
};

// Micro-averaged exact-match span scores.
//   - precision/recall/f1: a prediction counts when both boundaries and the
//     class match.
//   - loc_f1: boundaries only, classes ignored.
//   - cls_f1: fraction of boundary-matched spans whose class also matches
//     (micro F1 over class assignment restricted to those spans).
// Empty prediction or gold sides score 0 for the affected ratio.
struct SpanScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double loc_f1 = 0.0;
  double cls_f1 = 0.0;
  std::map<std::string, PerClassScore> per_class;
};

SpanScores span_f1(const std::vector<std::vector<int>>& predicted,
                   const std::vector<std::vector<int>>& gold,
                   const ClassSet& classes);

// Columnar corpus file: one token per line, blank line between sentences,
// whitespace-separated columns. Labels may be plain class names or carry
// BIO prefixes; both normalize to plain class indices.
struct ColumnSpec {
  int token_col = 0;
  int distant_col = 1;  // -1: no distant column, labels default to O
  int gold_col = -1;    // -1: file has no gold column
};

struct LoadedCorpus {
  Corpus corpus;
  ClassSet classes;
};

// Discovers the class set from the file.
LoadedCorpus load_column_corpus(const std::string& path, const ColumnSpec& spec);

// Validates labels against a fixed class set; unknown labels are an error
// listing the known classes.
Corpus load_column_corpus(const std::string& path, const ColumnSpec& spec,
                          const ClassSet& classes);

// Writes token + BIO distant label (+ BIO gold when present).
void write_column_corpus(const std::string& path, const Corpus& corpus,
                         const ClassSet& classes);

}  // namespace mproto
