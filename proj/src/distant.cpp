#include "distant.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "common.hpp"

namespace mproto {

namespace {

std::string ascii_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

Gazetteer Gazetteer::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open gazetteer file: " + path);
  Gazetteer gaz;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw io_error(path + ":" + std::to_string(line_no) + ": expected TYPE<TAB>surface form");
    GazetteerEntry entry;
    entry.type = line.substr(0, tab);
    std::istringstream ss(line.substr(tab + 1));
    std::string tok;
    while (ss >> tok) entry.surface.push_back(tok);
    if (entry.type.empty() || entry.surface.empty())
      throw input_error(path + ":" + std::to_string(line_no) + ": empty type or surface form");
    gaz.entries.push_back(std::move(entry));
  }
  return gaz;
}

void Gazetteer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write gazetteer file: " + path);
  for (const auto& e : entries) {
    out << e.type << '\t';
    for (std::size_t i = 0; i < e.surface.size(); ++i) {
      if (i) out << ' ';
      out << e.surface[i];
    }
    out << '\n';
  }
}

std::vector<std::string> dict_match(const std::vector<std::string>& tokens,
                                    const Gazetteer& gazetteer, bool case_insensitive) {
  std::vector<std::string> folded;
  if (case_insensitive) {
    folded.reserve(tokens.size());
    for (const auto& t : tokens) folded.push_back(ascii_lower(t));
  }
  const std::vector<std::string>& view = case_insensitive ? folded : tokens;

  std::vector<std::string> labels(tokens.size(), "O");
  std::size_t pos = 0;
  while (pos < view.size()) {
    std::size_t best_len = 0;
    const GazetteerEntry* best = nullptr;
    for (const auto& entry : gazetteer.entries) {
      const std::size_t len = entry.surface.size();
      if (len <= best_len || pos + len > view.size()) continue;
      bool match = true;
      for (std::size_t k = 0; k < len && match; ++k) {
        match = case_insensitive ? ascii_lower(entry.surface[k]) == view[pos + k]
                                 : entry.surface[k] == view[pos + k];
      }
      if (match) {  // strictly longer than the current best, so earliest entry wins ties
        best_len = len;
        best = &entry;
      }
    }
    if (best) {
      for (std::size_t k = 0; k < best_len; ++k) labels[pos + k] = best->type;
      pos += best_len;
    } else {
      ++pos;
    }
  }
  return labels;
}

Gazetteer subsample_dictionary(const Gazetteer& gazetteer, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw input_error("dictionary fraction must lie in (0, 1]");
  const auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(gazetteer.size())));
  Gazetteer out;
  out.entries.assign(gazetteer.entries.begin(),
                     gazetteer.entries.begin() + static_cast<std::ptrdiff_t>(
                                                     std::min(keep, gazetteer.size())));
  return out;
}

Corpus annotate_corpus(const Corpus& corpus, const Gazetteer& gazetteer,
                       const ClassSet& classes, bool case_insensitive) {
  Corpus out = corpus;
  for (auto& sentence : out.sentences) {
    auto labels = dict_match(sentence.tokens, gazetteer, case_insensitive);
    sentence.distant.clear();
    for (const auto& label : labels) {
      int idx = classes.index_of(label);
      if (idx < 0)
        throw input_error("gazetteer type '" + label + "' not in the corpus class set");
      sentence.distant.push_back(idx);
    }
  }
  return out;
}

SpanScores annotation_quality(const Corpus& corpus, const ClassSet& classes) {
  if (!corpus.has_gold())
    throw input_error("annotation quality needs gold labels on every sentence");
  std::vector<std::vector<int>> distant, gold;
  for (const auto& s : corpus.sentences) {
    if (s.distant.size() != s.gold.size())
      throw input_error("annotation quality: distant and gold lengths differ");
    distant.push_back(s.distant);
    gold.push_back(s.gold);
  }
  return span_f1(distant, gold, classes);
}

}  // namespace mproto
