#include "config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bangbang/errors.hpp"
#include "schemas.hpp"

namespace bangbang::cli {

namespace {

std::string type_name(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer() || v.is_number_unsigned()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

bool has_type(const json& v, const std::string& type) {
  if (type == "number") return v.is_number();
  if (type == "integer") {
    if (v.is_number_integer() || v.is_number_unsigned()) return true;
    return v.is_number_float() && std::floor(v.get<double>()) == v.get<double>();
  }
  return type_name(v) == type;
}

const json& resolve(const json& schema, const json& root) {
  if (!schema.contains("$ref")) return schema;
  const auto ref = schema["$ref"].get<std::string>();
  if (ref.rfind("#/", 0) != 0) throw ConfigError("unsupported schema reference " + ref);
  return resolve(root.at(json::json_pointer(ref.substr(1))), root);
}

void check(const json& doc, const json& schema_in, const json& root, const std::string& where,
           std::vector<std::string>& errors) {
  const json& schema = resolve(schema_in, root);
  const std::string at = where.empty() ? "/" : where;
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    std::string expected;
    if (t.is_array()) {
      for (const auto& one : t) {
        ok = ok || has_type(doc, one.get<std::string>());
        expected += (expected.empty() ? "" : " or ") + one.get<std::string>();
      }
    } else {
      expected = t.get<std::string>();
      ok = has_type(doc, expected);
    }
    if (!ok) {
      errors.push_back(at + ": expected " + expected + ", got " + type_name(doc));
      return;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& v : schema["enum"]) found = found || v == doc;
    if (!found) errors.push_back(at + ": value " + doc.dump() + " not in " + schema["enum"].dump());
  }
  if (doc.is_number()) {
    const double x = doc.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>()) {
      errors.push_back(at + ": must be >= " + schema["minimum"].dump());
    }
    if (schema.contains("maximum") && x > schema["maximum"].get<double>()) {
      errors.push_back(at + ": must be <= " + schema["maximum"].dump());
    }
    if (schema.contains("exclusiveMinimum") && !(x > schema["exclusiveMinimum"].get<double>())) {
      errors.push_back(at + ": must be > " + schema["exclusiveMinimum"].dump());
    }
  }
  if (doc.is_array()) {
    if (schema.contains("minItems") && doc.size() < schema["minItems"].get<std::size_t>()) {
      errors.push_back(at + ": needs at least " + schema["minItems"].dump() + " items");
    }
    if (schema.contains("maxItems") && doc.size() > schema["maxItems"].get<std::size_t>()) {
      errors.push_back(at + ": allows at most " + schema["maxItems"].dump() + " items");
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < doc.size(); ++i) {
        check(doc[i], schema["items"], root, where + "/" + std::to_string(i), errors);
      }
    }
  }
  if (doc.is_object()) {
    if (schema.contains("required")) {
      for (const auto& key : schema["required"]) {
        if (!doc.contains(key.get<std::string>())) {
          errors.push_back(at + ": missing required key '" + key.get<std::string>() + "'");
        }
      }
    }
    const json empty = json::object();
    const json& props = schema.contains("properties") ? schema["properties"] : empty;
    const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
    for (const auto& [key, value] : doc.items()) {
      if (props.contains(key)) {
        check(value, props[key], root, where + "/" + key, errors);
      } else if (closed) {
        errors.push_back(at + ": unknown key '" + key + "'");
      }
    }
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  return obj.contains(key) ? obj[key].get<T>() : fallback;
}

Vector to_vector(const json& arr) {
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

std::array<double, 3> to_array3(const json& arr) {
  return {arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()};
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

BangBangControl load_control(const json& section, const std::filesystem::path& base_dir) {
  if (section.contains("control")) return control_from_json(section["control"]);
  std::filesystem::path file = section["control_file"].get<std::string>();
  if (file.is_relative()) file = base_dir / file;
  const json doc = read_json(file);
  try {
    return control_from_json(doc.contains("control") ? doc["control"] : doc);
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> schema_errors(const json& doc, const json& schema) {
  std::vector<std::string> errors;
  check(doc, schema, schema, "", errors);
  return errors;
}

const json& experiment_schema() {
  static const json schema = json::parse(experiment_schema_text());
  return schema;
}

const json& result_schema() {
  static const json schema = json::parse(result_schema_text());
  return schema;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const json& doc) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(doc.dump())));
  return buf;
}

json control_to_json(const BangBangControl& control) {
  json events = json::array();
  for (const auto& e : control.events()) events.push_back({{"t", e.time}, {"channel", e.channel + 1}});
  return {{"bounds", {{"lower", control.bounds().lower}, {"upper", control.bounds().upper}}},
          {"initial_values", control.initial_values()},
          {"events", events},
          {"t_f", control.final_time()}};
}

BangBangControl control_from_json(const json& doc) {
  json wrapper = {{"$ref", "#/definitions/control"}, {"definitions", experiment_schema()["definitions"]}};
  const auto errors = schema_errors(doc, wrapper);
  if (!errors.empty()) throw ConfigError("control: " + errors.front());
  ChannelBounds bounds{doc["bounds"]["lower"].get<std::vector<double>>(),
                       doc["bounds"]["upper"].get<std::vector<double>>()};
  std::vector<SwitchingEvent> events;
  for (const auto& e : doc["events"]) {
    events.push_back({e["t"].get<double>(), e["channel"].get<std::size_t>() - 1});
  }
  try {
    return BangBangControl(std::move(bounds), doc["initial_values"].get<std::vector<double>>(),
                           std::move(events), doc["t_f"].get<double>());
  } catch (const std::exception& e) {
    throw ConfigError(std::string("control: ") + e.what());
  }
}

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  const auto errors = schema_errors(doc, experiment_schema());
  if (!errors.empty()) {
    std::ostringstream msg;
    for (std::size_t i = 0; i < errors.size(); ++i) msg << (i ? "; " : "") << errors[i];
    throw ConfigError(msg.str());
  }
  ExperimentConfig c;
  c.document = doc;
  const auto& model = doc["model"];
  c.model.alpha = to_array3(model["alpha"]);
  for (const auto& b : model["torques"]) c.model.torques.push_back(to_array3(b));
  if (model.contains("perturbation")) {
    const auto& p = model["perturbation"];
    c.perturbation.epsilon = get_or(p, "epsilon", 0.0);
    if (p.contains("amplitudes")) c.perturbation.amplitudes = to_array3(p["amplitudes"]);
    if (p.contains("periods")) c.perturbation.periods = to_array3(p["periods"]);
    if (p.contains("phases")) c.perturbation.phases = to_array3(p["phases"]);
  }
  const std::size_t m = c.model.channels();
  c.x0 = to_vector(doc["x0"]);
  c.target = to_vector(doc["target"]);
  c.gap.eta = doc["gap"].get<double>();
  c.integrator.base_step = get_or(doc, "base_step", 1e-3);
  c.seed = get_or<std::uint64_t>(doc, "seed", 1);
  c.output_dir = get_or<std::string>(doc, "output_dir", "out");

  const json empty = json::object();
  const auto& nominal = doc.contains("nominal") ? doc["nominal"] : empty;
  c.nominal.search.starts = get_or<std::size_t>(nominal, "starts", 50);
  c.nominal.search.min_final_time = get_or(nominal, "min_final_time", 0.2);
  c.nominal.search.max_final_time = get_or(nominal, "max_final_time", 3.0);
  c.nominal.search.seed = c.seed;
  if (nominal.contains("structures")) {
    for (const auto& s : nominal["structures"]) {
      SwitchingStructure st;
      st.initial_values = s["initial_values"].get<std::vector<double>>();
      for (const auto& ch : s["channels"]) {
        const auto k = ch.get<std::size_t>();
        if (k > m) throw ConfigError("/nominal/structures: channel " + std::to_string(k) + " out of range");
        st.channels.push_back(k - 1);
      }
      if (st.initial_values.size() != m) {
        throw ConfigError("/nominal/structures: initial_values needs one entry per torque");
      }
      c.nominal.search.structures.push_back(std::move(st));
    }
  } else {
    c.nominal.search.structures = all_structures(m, 3);
  }
  if (nominal.contains("control") || nominal.contains("control_file")) {
    c.nominal.control = load_control(nominal, base_dir);
  }

  const auto& rob = doc.contains("robustify") ? doc["robustify"] : empty;
  c.robustify.needles = get_or<std::size_t>(rob, "needles", 3);
  c.robustify.mode = get_or<std::string>(rob, "mode", "exhaustive") == "greedy" ? SearchMode::greedy
                                                                                 : SearchMode::exhaustive;
  if (rob.contains("greedy_prefix")) {
    for (const auto& ch : rob["greedy_prefix"]) {
      const auto k = ch.get<std::size_t>();
      if (k > m) throw ConfigError("/robustify/greedy_prefix: channel out of range");
      c.robustify.greedy_prefix.push_back(k - 1);
    }
    if (c.robustify.greedy_prefix.size() + 1 != c.robustify.needles) {
      throw ConfigError("/robustify/greedy_prefix: needs needles - 1 entries");
    }
  }
  c.robustify.weights = {get_or(rob, "lambda1", 1.0), get_or(rob, "lambda2", 1.0)};
  c.robustify.grid_samples = get_or<std::size_t>(rob, "grid_samples", 200);
  try {
    c.robustify.weights.validate();
    c.perturbation.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const auto& tr = doc.contains("tracking") ? doc["tracking"] : empty;
  c.tracking.source = get_or<std::string>(tr, "source", "robustified") == "nominal" ? TrackSource::nominal
                                                                                   : TrackSource::robustified;
  if (tr.contains("control") || tr.contains("control_file")) c.tracking.control = load_control(tr, base_dir);
  c.tracking.checkpoints = get_or<std::size_t>(tr, "checkpoints", 20);
  c.tracking.drift_threshold = get_or(tr, "drift_threshold", 1e-12);
  c.tracking.damping = get_or(tr, "damping", 1.0);

  const auto& sw = doc.contains("sweep") ? doc["sweep"] : empty;
  if (sw.contains("needles")) c.sweep.needles = sw["needles"].get<std::vector<std::size_t>>();
  c.sweep.per_needle_count = get_or<std::size_t>(sw, "per_needle_count", 2);
  double start = 0.0, stop = 2.0;
  std::size_t count = 41;
  if (sw.contains("epsilon_grid")) {
    start = sw["epsilon_grid"]["start"].get<double>();
    stop = sw["epsilon_grid"]["stop"].get<double>();
    count = sw["epsilon_grid"]["count"].get<std::size_t>();
    if (!(stop > start)) throw ConfigError("/sweep/epsilon_grid: stop must exceed start");
  }
  for (std::size_t i = 0; i < count; ++i) {
    c.sweep.epsilon_grid.push_back(start + (stop - start) * static_cast<double>(i) /
                                               static_cast<double>(count - 1));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const json doc = read_json(path);
  try {
    return parse_config(doc, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace bangbang::cli
