#include <fstream>

#include "cli/cli.hpp"
#include "docslm/jsonl.hpp"

namespace docslm::cli {
namespace {

bool skip_option(const CLI::Option* opt) {
  const std::string name = opt->get_single_name();
  return name.empty() || name == "help" || name == "config";
}

std::string scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

nlohmann::json typed(const std::string& text) {
  if (text.empty()) return text;
  try {
    auto j = nlohmann::json::parse(text);
    if (j.is_number() || j.is_boolean()) return j;
  } catch (const nlohmann::json::parse_error&) {
  }
  return text;
}

}  // namespace

void apply_json_config(CLI::App& cmd, const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  if (!j.is_object()) throw std::runtime_error(path.string() + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = nullptr;
    for (CLI::Option* o : cmd.get_options()) {
      if (!skip_option(o) && o->get_single_name() == key) opt = o;
    }
    if (opt == nullptr) throw std::runtime_error(path.string() + ": unknown setting '" + key + "'");
    if (opt->count() > 0) continue;  // the command line wins
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(scalar_text(v));
    } else {
      opt->add_result(scalar_text(value));
    }
    opt->run_callback();
  }
}

nlohmann::json effective_config(const CLI::App& cmd) {
  nlohmann::json j = nlohmann::json::object();
  for (const CLI::Option* o : cmd.get_options()) {
    if (skip_option(o)) continue;
    const std::string name = o->get_single_name();
    if (o->get_expected_min() == 0) {  // flag
      j[name] = o->count() > 0 ? o->as<bool>() : typed(o->get_default_str()) == true;
      continue;
    }
    if (o->count() == 0) {
      j[name] = o->get_default_str().empty() ? nlohmann::json(nullptr) : typed(o->get_default_str());
      continue;
    }
    const auto& results = o->results();
    if (o->get_expected_max() > 1) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& r : results) arr.push_back(typed(r));
      j[name] = arr;
    } else {
      j[name] = typed(results.back());
    }
  }
  return j;
}

void write_config_snapshot(const CLI::App& cmd, const std::filesystem::path& path) {
  nlohmann::json j = effective_config(cmd);
  j["subcommand"] = cmd.get_name();
  write_json_file(path, j);
}

}  // namespace docslm::cli
