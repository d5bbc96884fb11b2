#include "corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "common.hpp"

namespace mproto {

ClassSet::ClassSet(std::vector<std::string> entity_names) {
  std::sort(entity_names.begin(), entity_names.end());
  names_ = {"O"};
  for (auto& n : entity_names) {
    if (n.empty()) throw input_error("class names must be nonempty");
    if (n == "O") continue;
    if (!names_.empty() && names_.back() == n) continue;
    names_.push_back(std::move(n));
  }
}

int ClassSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.tokens.size();
  return n;
}

bool Corpus::has_gold() const {
  if (sentences.empty()) return false;
  for (const auto& s : sentences)
    if (!s.has_gold()) return false;
  return true;
}

std::vector<Span> decode_spans(const std::vector<int>& labels) {
  std::vector<Span> spans;
  int i = 0;
  const int n = static_cast<int>(labels.size());
  while (i < n) {
    if (labels[i] <= 0) {
      ++i;
      continue;
    }
    int j = i + 1;
    while (j < n && labels[j] == labels[i]) ++j;
    spans.push_back({i, j, labels[i]});
    i = j;
  }
  return spans;
}

std::vector<int> paint_spans(const std::vector<Span>& spans, int length) {
  std::vector<int> labels(static_cast<std::size_t>(length), 0);
  for (const auto& s : spans) {
    if (s.begin < 0 || s.end > length || s.begin >= s.end)
      throw contract_error("paint_spans: span out of bounds");
    for (int i = s.begin; i < s.end; ++i) labels[static_cast<std::size_t>(i)] = s.cls;
  }
  return labels;
}

namespace {

double safe_ratio(long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; }

double f_measure(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

SpanScores span_f1(const std::vector<std::vector<int>>& predicted,
                   const std::vector<std::vector<int>>& gold, const ClassSet& classes) {
  if (predicted.size() != gold.size())
    throw input_error("span_f1: prediction and gold have different sentence counts");

  long tp = 0, n_pred = 0, n_gold = 0;
  long loc_tp = 0, loc_matched = 0, cls_correct = 0;
  std::map<int, PerClassScore> per_class;

  for (std::size_t s = 0; s < predicted.size(); ++s) {
    if (predicted[s].size() != gold[s].size())
      throw input_error("span_f1: sentence length mismatch at sentence " + std::to_string(s));
    auto p_spans = decode_spans(predicted[s]);
    auto g_spans = decode_spans(gold[s]);
    n_pred += static_cast<long>(p_spans.size());
    n_gold += static_cast<long>(g_spans.size());
    for (const auto& sp : p_spans) per_class[sp.cls].predicted++;
    for (const auto& sp : g_spans) per_class[sp.cls].gold++;

    for (const auto& ps : p_spans) {
      for (const auto& gs : g_spans) {
        if (ps.begin == gs.begin && ps.end == gs.end) {
          ++loc_tp;
          ++loc_matched;
          if (ps.cls == gs.cls) {
            ++tp;
            ++cls_correct;
            per_class[ps.cls].matched++;
          }
          break;  // spans within a sentence are disjoint; one match max
        }
      }
    }
  }

  SpanScores out;
  out.precision = safe_ratio(tp, n_pred);
  out.recall = safe_ratio(tp, n_gold);
  out.f1 = f_measure(out.precision, out.recall);
  double loc_p = safe_ratio(loc_tp, n_pred);
  double loc_r = safe_ratio(loc_tp, n_gold);
  out.loc_f1 = f_measure(loc_p, loc_r);
  out.cls_f1 = safe_ratio(cls_correct, loc_matched);
  for (auto& [cls, sc] : per_class) {
    sc.precision = safe_ratio(sc.matched, sc.predicted);
    sc.recall = safe_ratio(sc.matched, sc.gold);
    sc.f1 = f_measure(sc.precision, sc.recall);
    out.per_class[classes.name(cls)] = sc;
  }
  return out;
}

namespace {

// "B-PER" / "I-PER" / "PER" / "O" -> bare class name.
std::string strip_bio(const std::string& label) {
  if (label.size() > 2 && (label[0] == 'B' || label[0] == 'I') && label[1] == '-')
    return label.substr(2);
  return label;
}

struct RawSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> distant;
  std::vector<std::string> gold;
};

std::vector<RawSentence> read_rows(const std::string& path, const ColumnSpec& spec) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open corpus file: " + path);

  int needed = std::max(spec.token_col, std::max(spec.distant_col, spec.gold_col));
  if (spec.token_col < 0)
    throw input_error("corpus columns: token column index must be >= 0");

  std::vector<RawSentence> sentences;
  RawSentence current;
  std::string line;
  long line_no = 0;
  auto flush = [&]() {
    if (!current.tokens.empty()) sentences.push_back(std::move(current));
    current = RawSentence{};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    std::istringstream ss(line);
    std::vector<std::string> cols;
    std::string col;
    while (ss >> col) cols.push_back(col);
    if (static_cast<int>(cols.size()) <= needed)
      throw io_error(path + ":" + std::to_string(line_no) + ": expected at least " +
                     std::to_string(needed + 1) + " columns, got " +
                     std::to_string(cols.size()));
    current.tokens.push_back(cols[static_cast<std::size_t>(spec.token_col)]);
    if (spec.distant_col >= 0)
      current.distant.push_back(cols[static_cast<std::size_t>(spec.distant_col)]);
    if (spec.gold_col >= 0) current.gold.push_back(cols[static_cast<std::size_t>(spec.gold_col)]);
  }
  flush();
  return sentences;
}

Corpus convert(const std::vector<RawSentence>& raw, const ColumnSpec& spec,
               const ClassSet& classes, const std::string& path) {
  Corpus corpus;
  for (const auto& rs : raw) {
    Sentence s;
    s.tokens = rs.tokens;
    if (spec.distant_col < 0) s.distant.assign(s.tokens.size(), 0);
    for (const auto& label : rs.distant) {
      int idx = classes.index_of(strip_bio(label));
      if (idx < 0) {
        std::string known;
        for (const auto& n : classes.names()) known += (known.empty() ? "" : ", ") + n;
        throw input_error(path + ": unknown label '" + label + "'; known classes: " + known);
      }
      s.distant.push_back(idx);
    }
    if (spec.gold_col >= 0) {
      for (const auto& label : rs.gold) {
        int idx = classes.index_of(strip_bio(label));
        if (idx < 0) {
          std::string known;
          for (const auto& n : classes.names()) known += (known.empty() ? "" : ", ") + n;
          throw input_error(path + ": unknown label '" + label + "'; known classes: " + known);
        }
        s.gold.push_back(idx);
      }
    }
    corpus.sentences.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace

LoadedCorpus load_column_corpus(const std::string& path, const ColumnSpec& spec) {
  auto raw = read_rows(path, spec);
  std::set<std::string> types;
  for (const auto& rs : raw) {
    for (const auto& l : rs.distant) types.insert(strip_bio(l));
    for (const auto& l : rs.gold) types.insert(strip_bio(l));
  }
  types.erase("O");
  ClassSet classes(std::vector<std::string>(types.begin(), types.end()));
  return {convert(raw, spec, classes, path), classes};
}

Corpus load_column_corpus(const std::string& path, const ColumnSpec& spec,
                          const ClassSet& classes) {
  return convert(read_rows(path, spec), spec, classes, path);
}

namespace {

void append_bio(std::string& line, const std::vector<int>& labels, std::size_t i,
                const ClassSet& classes) {
  int cls = labels[i];
  if (cls == 0) {
    line += "\tO";
  } else {
    bool starts = i == 0 || labels[i - 1] != cls;
    line += starts ? "\tB-" : "\tI-";
    line += classes.name(cls);
  }
}

}  // namespace

void write_column_corpus(const std::string& path, const Corpus& corpus,
                         const ClassSet& classes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write corpus file: " + path);
  for (const auto& s : corpus.sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      std::string line = s.tokens[i];
      append_bio(line, s.distant, i, classes);
      if (s.has_gold()) append_bio(line, s.gold, i, classes);
      out << line << "\n";
    }
    out << "\n";
  }
}

}  // namespace mproto
