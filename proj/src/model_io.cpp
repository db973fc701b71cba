#include "rmm/model_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace rmm {

using nlohmann::json;

json model_to_json(const Rmmdp& model) {
  check_dimensions(model);
  json doc;
  doc["format"] = kModelFormat;
  doc["num_states"] = model.num_states;
  doc["num_actions"] = model.num_actions;
  doc["horizon"] = model.horizon;
  doc["num_contexts"] = model.num_contexts();
  doc["support"] = std::vector<double>(model.support.values().begin(), model.support.values().end());
  doc["transition"] = model.transition;
  doc["init"] = model.init;
  doc["weights"] = model.weights;
  doc["rewards"] = model.rewards;
  return doc;
}

Rmmdp model_from_json(const json& doc) {
  if (!doc.is_object() || doc.value("format", std::string()) != kModelFormat) {
    throw std::invalid_argument(std::string("model document must carry \"format\": \"") +
                                kModelFormat + "\"");
  }
  Rmmdp model;
  try {
    model.num_states = doc.at("num_states").get<int>();
    model.num_actions = doc.at("num_actions").get<int>();
    model.horizon = doc.at("horizon").get<int>();
    model.support = RewardSupport(doc.at("support").get<std::vector<double>>());
    model.transition = doc.at("transition").get<std::vector<double>>();
    model.init = doc.at("init").get<std::vector<double>>();
    model.weights = doc.at("weights").get<std::vector<double>>();
    model.rewards = doc.at("rewards").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed model document: ") + e.what());
  }
  if (doc.contains("num_contexts") &&
      doc["num_contexts"].get<int>() != model.num_contexts()) {
    throw std::invalid_argument("num_contexts disagrees with the weights array");
  }
  check_dimensions(model);
  renormalize(model);
  const auto violations = validate_model(model);
  if (!violations.empty()) {
    std::string msg = "invalid model:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw std::invalid_argument(msg);
  }
  return model;
}

std::string dump_json(const json& doc) { return doc.dump(2) + "\n"; }

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void write_json(const json& doc, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << dump_json(doc);
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string format_real(double value) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

Rmmdp load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

void save_model(const Rmmdp& model, const std::filesystem::path& path) {
  write_json(model_to_json(model), path);
}

}  // namespace rmm
