#include "mproto.h"

#include <cstring>
#include <new>
#include <string>

#include "common.hpp"
#include "corpus.hpp"
#include "distant.hpp"
#include "ot.hpp"
#include "runner.hpp"

using mproto::ClassSet;
using mproto::Corpus;
using mproto::Gazetteer;

struct mproto_corpus {
  Corpus corpus;
  ClassSet classes;
};

struct mproto_gazetteer {
  Gazetteer gazetteer;
};

namespace {

thread_local std::string g_last_error;

mproto_status fail(mproto_status status, const char* what) {
  g_last_error = what;
  return status;
}

template <typename Fn>
mproto_status guarded(Fn&& fn) {
  try {
    fn();
    return MPROTO_OK;
  } catch (const mproto::input_error& e) {
    return fail(MPROTO_ERR_INVALID_ARGUMENT, e.what());
  } catch (const mproto::io_error& e) {
    return fail(MPROTO_ERR_IO, e.what());
  } catch (const mproto::contract_error& e) {
    return fail(MPROTO_ERR_CONTRACT, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(MPROTO_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(MPROTO_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = new (std::nothrow) char[s.size() + 1];
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

mproto_status run_command(nlohmann::json (*command)(const nlohmann::json&),
                          const char* args_json, char** summary_json) {
  if (!args_json) return fail(MPROTO_ERR_INVALID_ARGUMENT, "args_json is null");
  return guarded([&] {
    nlohmann::json args = nlohmann::json::parse(args_json);
    nlohmann::json summary = command(args);
    if (summary_json) *summary_json = dup_string(summary.dump());
  });
}

}  // namespace

extern "C" {

const char* mproto_version(void) { return mproto::version_string(); }

const char* mproto_last_error(void) { return g_last_error.c_str(); }

void mproto_string_free(char* s) { delete[] s; }

mproto_status mproto_sinkhorn(const double* cost, size_t rows, size_t cols,
                              const double* row_marginals, const double* col_marginals,
                              double reg_weight, int max_iters, double* gamma_out,
                              int* iterations_out, int* converged_out) {
  if (!cost || !row_marginals || !col_marginals || !gamma_out)
    return fail(MPROTO_ERR_INVALID_ARGUMENT, "sinkhorn: null pointer argument");
  if (rows == 0 || cols == 0)
    return fail(MPROTO_ERR_INVALID_ARGUMENT, "sinkhorn: empty problem");
  return guarded([&] {
    Eigen::MatrixXd c(rows, cols);
    for (size_t i = 0; i < rows; ++i)
      for (size_t j = 0; j < cols; ++j)
        c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cost[i * cols + j];
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(row_marginals,
                                                          static_cast<Eigen::Index>(rows));
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(col_marginals,
                                                          static_cast<Eigen::Index>(cols));
    auto plan = mproto::ot::sinkhorn(c, a, b, reg_weight, max_iters);
    for (size_t i = 0; i < rows; ++i)
      for (size_t j = 0; j < cols; ++j)
        gamma_out[i * cols + j] =
            plan.gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (iterations_out) *iterations_out = plan.iterations;
    if (converged_out) *converged_out = plan.converged ? 1 : 0;
  });
}

mproto_status mproto_corpus_load(const char* path, int token_col, int distant_col,
                                 int gold_col, mproto_corpus** out) {
  if (!path || !out) return fail(MPROTO_ERR_INVALID_ARGUMENT, "corpus_load: null argument");
  return guarded([&] {
    mproto::ColumnSpec spec{token_col, distant_col, gold_col};
    auto loaded = mproto::load_column_corpus(path, spec);
    *out = new mproto_corpus{std::move(loaded.corpus), std::move(loaded.classes)};
  });
}

mproto_status mproto_corpus_save(const mproto_corpus* corpus, const char* path) {
  if (!corpus || !path) return fail(MPROTO_ERR_INVALID_ARGUMENT, "corpus_save: null argument");
  return guarded([&] { mproto::write_column_corpus(path, corpus->corpus, corpus->classes); });
}

size_t mproto_corpus_sentences(const mproto_corpus* corpus) {
  return corpus ? corpus->corpus.sentences.size() : 0;
}

size_t mproto_corpus_tokens(const mproto_corpus* corpus) {
  return corpus ? corpus->corpus.token_count() : 0;
}

void mproto_corpus_free(mproto_corpus* corpus) { delete corpus; }

mproto_status mproto_gazetteer_load(const char* path, mproto_gazetteer** out) {
  if (!path || !out) return fail(MPROTO_ERR_INVALID_ARGUMENT, "gazetteer_load: null argument");
  return guarded([&] { *out = new mproto_gazetteer{Gazetteer::load(path)}; });
}

mproto_status mproto_gazetteer_subsample(const mproto_gazetteer* gazetteer, double fraction,
                                         mproto_gazetteer** out) {
  if (!gazetteer || !out)
    return fail(MPROTO_ERR_INVALID_ARGUMENT, "gazetteer_subsample: null argument");
  return guarded([&] {
    *out = new mproto_gazetteer{mproto::subsample_dictionary(gazetteer->gazetteer, fraction)};
  });
}

size_t mproto_gazetteer_size(const mproto_gazetteer* gazetteer) {
  return gazetteer ? gazetteer->gazetteer.size() : 0;
}

void mproto_gazetteer_free(mproto_gazetteer* gazetteer) { delete gazetteer; }

mproto_status mproto_annotate(const mproto_corpus* corpus, const mproto_gazetteer* gazetteer,
                              int case_insensitive, mproto_corpus** out) {
  if (!corpus || !gazetteer || !out)
    return fail(MPROTO_ERR_INVALID_ARGUMENT, "annotate: null argument");
  return guarded([&] {
    std::vector<std::string> names(corpus->classes.names().begin() + 1,
                                   corpus->classes.names().end());
    for (const auto& e : gazetteer->gazetteer.entries) names.push_back(e.type);
    ClassSet classes(names);
    Corpus annotated = mproto::annotate_corpus(corpus->corpus, gazetteer->gazetteer, classes,
                                               case_insensitive != 0);
    *out = new mproto_corpus{std::move(annotated), std::move(classes)};
  });
}

mproto_status mproto_annotation_quality(const mproto_corpus* corpus, char** json_out) {
  if (!corpus || !json_out)
    return fail(MPROTO_ERR_INVALID_ARGUMENT, "annotation_quality: null argument");
  return guarded([&] {
    auto scores = mproto::annotation_quality(corpus->corpus, corpus->classes);
    nlohmann::json out = {{"precision", scores.precision},
                          {"recall", scores.recall},
                          {"f1", scores.f1},
                          {"loc_f1", scores.loc_f1},
                          {"cls_f1", scores.cls_f1}};
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [name, sc] : scores.per_class)
      per_class[name] = {{"precision", sc.precision}, {"recall", sc.recall}, {"f1", sc.f1}};
    out["per_class"] = per_class;
    *json_out = dup_string(out.dump());
  });
}

mproto_status mproto_run_annotate(const char* args_json, char** summary_json) {
  return run_command(&mproto::run_annotate, args_json, summary_json);
}

mproto_status mproto_run_train(const char* args_json, char** summary_json) {
  return run_command(&mproto::run_train, args_json, summary_json);
}

mproto_status mproto_run_eval(const char* args_json, char** summary_json) {
  return run_command(&mproto::run_eval, args_json, summary_json);
}

mproto_status mproto_run_diagnose(const char* args_json, char** summary_json) {
  return run_command(&mproto::run_diagnose, args_json, summary_json);
}

mproto_status mproto_run_synth(const char* args_json, char** summary_json) {
  return run_command(&mproto::run_synth, args_json, summary_json);
}

mproto_status mproto_run_replay(const char* manifest_path, const char* out_dir,
                                char** summary_json) {
  if (!manifest_path || !out_dir)
    return fail(MPROTO_ERR_INVALID_ARGUMENT, "replay: null argument");
  return guarded([&] {
    nlohmann::json summary = mproto::run_replay(manifest_path, out_dir);
    if (summary_json) *summary_json = dup_string(summary.dump());
  });
}

}  // extern "C"
