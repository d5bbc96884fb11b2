// Command-line driver for the mproto shared library. Everything goes
// through the C API in mproto.h; this binary only assembles argument JSON
// and reports results.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mproto.h"

using nlohmann::json;

namespace {

int finish(mproto_status status, char* summary) {
  if (status != MPROTO_OK) {
    std::cerr << "error: " << mproto_last_error() << "\n";
    return 1;
  }
  if (summary) {
    std::cout << json::parse(summary).dump(2) << "\n";
    mproto_string_free(summary);
  }
  return 0;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  json parsed = json::parse(in, nullptr, false);
  if (parsed.is_discarded())
    throw CLI::ValidationError("--config", path + " is not valid JSON");
  return parsed;
}

// key=value pairs; values parse as JSON scalars when possible.
void apply_sets(json& args, const std::vector<std::string>& sets) {
  for (const auto& assignment : sets) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
      throw CLI::ValidationError("--set", "expected key=value, got " + assignment);
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    json* node = &args;
    std::size_t start = 0;
    while (true) {
      auto dot = key.find('.', start);
      std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
      if (part.empty()) throw CLI::ValidationError("--set", "empty key segment in " + assignment);
      if (dot == std::string::npos) {
        json parsed = json::parse(value, nullptr, false);
        (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(mproto_version()) +
               " — multi-prototype sequence labeling with optimal-transport "
               "prototype assignment"};
  app.require_subcommand(1);

  // --- annotate ---
  std::string an_corpus, an_gaz, an_out;
  double an_fraction = 1.0;
  bool an_ci = false;
  int an_token_col = 0, an_gold_col = -1;
  auto* annotate = app.add_subcommand(
      "annotate", "Distantly annotate a corpus by gazetteer matching");
  annotate->add_option("--corpus", an_corpus, "Columnar corpus file")->required();
  annotate->add_option("--gazetteer", an_gaz, "TYPE<TAB>surface-form dictionary")->required();
  annotate->add_option("--fraction", an_fraction, "Keep the first ceil(f*n) entries");
  annotate->add_flag("--case-insensitive", an_ci, "ASCII case-insensitive matching");
  annotate->add_option("--token-col", an_token_col, "Token column index");
  annotate->add_option("--gold-col", an_gold_col, "Gold label column (-1: none)");
  annotate->add_option("--out", an_out, "Output directory")->required();

  // --- train ---
  std::string tr_config, tr_out;
  std::vector<std::string> tr_sets;
  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", tr_config, "Training config (JSON)")->required();
  train->add_option("--out", tr_out, "Output directory (overrides config out_dir)");
  train->add_option("--set", tr_sets, "Override a config field, e.g. --set epochs=5");

  // --- eval ---
  std::string ev_ckpt, ev_corpus, ev_features, ev_out;
  int ev_token_col = 0, ev_distant_col = -1, ev_gold_col = -1;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  eval->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  eval->add_option("--corpus", ev_corpus, "Columnar corpus file")->required();
  eval->add_option("--features", ev_features, "Feature store for precomputed encoders");
  eval->add_option("--token-col", ev_token_col, "Token column index");
  eval->add_option("--distant-col", ev_distant_col, "Distant label column (-1: none)");
  eval->add_option("--gold-col", ev_gold_col, "Gold label column (-1: none)");
  eval->add_option("--out", ev_out, "Output directory")->required();

  // --- diagnose ---
  std::string dg_ckpt, dg_corpus, dg_features, dg_which, dg_out;
  int dg_token_col = 0, dg_distant_col = 1, dg_gold_col = -1;
  std::vector<std::string> dg_sets;
  auto* diagnose = app.add_subcommand(
      "diagnose", "Emit feature/transport/similarity diagnostics as CSV");
  diagnose->add_option("--checkpoint", dg_ckpt, "Checkpoint file")->required();
  diagnose->add_option("--corpus", dg_corpus, "Columnar corpus file")->required();
  diagnose->add_option("--features", dg_features, "Feature store for precomputed encoders");
  diagnose->add_option("--which", dg_which, "features | transport | similarity")->required();
  diagnose->add_option("--token-col", dg_token_col, "Token column index");
  diagnose->add_option("--distant-col", dg_distant_col, "Distant label column (-1: none)");
  diagnose->add_option("--gold-col", dg_gold_col, "Gold label column (-1: none)");
  diagnose->add_option("--set", dg_sets, "Override assignment options, e.g. --set o_ratio=0.1");
  diagnose->add_option("--out", dg_out, "Output directory")->required();

  // --- synth ---
  std::string sy_config, sy_out;
  std::vector<std::string> sy_sets;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark corpus");
  synth->add_option("--config", sy_config, "Generator config (JSON)");
  synth->add_option("--set", sy_sets, "Override a generator field");
  synth->add_option("--out", sy_out, "Output directory")->required();

  // --- replay ---
  std::string rp_manifest, rp_out;
  auto* replay = app.add_subcommand("replay", "Re-run a recorded manifest");
  replay->add_option("--manifest", rp_manifest, "manifest.json from a previous run")->required();
  replay->add_option("--out", rp_out, "Fresh output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    char* summary = nullptr;
    if (annotate->parsed()) {
      json args = {{"corpus", an_corpus},     {"gazetteer", an_gaz},
                   {"fraction", an_fraction}, {"case_insensitive", an_ci},
                   {"token_col", an_token_col}, {"gold_col", an_gold_col},
                   {"out_dir", an_out}};
      return finish(mproto_run_annotate(args.dump().c_str(), &summary), summary);
    }
    if (train->parsed()) {
      json args = load_json_file(tr_config);
      apply_sets(args, tr_sets);
      if (!tr_out.empty()) args["out_dir"] = tr_out;
      return finish(mproto_run_train(args.dump().c_str(), &summary), summary);
    }
    if (eval->parsed()) {
      json args = {{"checkpoint", ev_ckpt}, {"corpus", ev_corpus},
                   {"token_col", ev_token_col}, {"distant_col", ev_distant_col},
                   {"gold_col", ev_gold_col}, {"out_dir", ev_out}};
      if (!ev_features.empty()) args["features"] = ev_features;
      return finish(mproto_run_eval(args.dump().c_str(), &summary), summary);
    }
    if (diagnose->parsed()) {
      json args = {{"checkpoint", dg_ckpt}, {"corpus", dg_corpus},
                   {"which", dg_which},     {"token_col", dg_token_col},
                   {"distant_col", dg_distant_col}, {"gold_col", dg_gold_col},
                   {"out_dir", dg_out}};
      if (!dg_features.empty()) args["features"] = dg_features;
      apply_sets(args, dg_sets);
      return finish(mproto_run_diagnose(args.dump().c_str(), &summary), summary);
    }
    if (synth->parsed()) {
      json args = sy_config.empty() ? json::object() : load_json_file(sy_config);
      apply_sets(args, sy_sets);
      args["out_dir"] = sy_out;
      return finish(mproto_run_synth(args.dump().c_str(), &summary), summary);
    }
    if (replay->parsed()) {
      return finish(mproto_run_replay(rp_manifest.c_str(), rp_out.c_str(), &summary), summary);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
