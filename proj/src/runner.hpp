#pragma once

#include <json.hpp>

#include <string>

namespace mproto {

// Command layer behind the CLI. Each call takes a JSON argument object
// (documented in the README), performs one command end to end, writes its
// artifacts plus a run manifest into args["out_dir"], and returns a summary
// object. Replaying a manifest with a fresh out_dir reproduces every
// artifact byte for byte (the manifest itself records the run location).
nlohmann::json run_annotate(const nlohmann::json& args);
nlohmann::json run_train(const nlohmann::json& args);
nlohmann::json run_eval(const nlohmann::json& args);
nlohmann::json run_diagnose(const nlohmann::json& args);
nlohmann::json run_synth(const nlohmann::json& args);
nlohmann::json run_replay(const std::string& manifest_path, const std::string& out_dir);

// "a.b.c=value" overrides applied to an argument object; values parse as
// JSON when possible and fall back to strings.
void apply_override(nlohmann::json& args, const std::string& assignment);

}  // namespace mproto
