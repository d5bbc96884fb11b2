#pragma once

#include <string>
#include <vector>

#include "corpus.hpp"

namespace mproto {

// Typed surface-form dictionary; file order is preserved and meaningful
// (coverage subsampling keeps a prefix).
struct GazetteerEntry {
  std::vector<std::string> surface;  // tokenized surface form
  std::string type;
};

struct Gazetteer {
  std::vector<GazetteerEntry> entries;

  std::size_t size() const { return entries.size(); }

  // One entry per line: TYPE<TAB>surface form. The surface form is split on
  // whitespace.
  static Gazetteer load(const std::string& path);
  void save(const std::string& path) const;
};

// Greedy left-to-right longest-match tagging: at each position the longest
// gazetteer surface form starting there wins (ties to the earliest entry),
// its tokens take the entry type, and matching resumes after it. Unmatched
// tokens stay "O". Returns one type name per token.
std::vector<std::string> dict_match(const std::vector<std::string>& tokens,
                                    const Gazetteer& gazetteer, bool case_insensitive);

// First ceil(fraction * size) entries in stored order; fraction in (0, 1].
Gazetteer subsample_dictionary(const Gazetteer& gazetteer, double fraction);

// Labels a whole corpus, replacing its distant annotations.
Corpus annotate_corpus(const Corpus& corpus, const Gazetteer& gazetteer,
                       const ClassSet& classes, bool case_insensitive);

// Span-level precision/recall/F1 of the distant annotation against gold.
SpanScores annotation_quality(const Corpus& corpus, const ClassSet& classes);

}  // namespace mproto
