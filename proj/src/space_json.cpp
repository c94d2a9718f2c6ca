#include "layerstitch/space_json.hpp"

#include "layerstitch/error.hpp"

namespace layerstitch {

using nlohmann::json;

namespace {

template <typename T>
T get_field(const json& doc, const char* key, const char* what) {
  if (!doc.is_object() || !doc.contains(key))
    throw ParseError(std::string(what) + ": missing field '" + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string(what) + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& doc, const char* key, T fallback, const char* what) {
  if (!doc.contains(key)) return fallback;
  return get_field<T>(doc, key, what);
}

}  // namespace

json to_json(const SpaceSpec& spec) {
  json doc;
  doc["l"] = spec.l;
  doc["K"] = spec.K;
  doc["sparsity"] = spec.sparsity.str();
  doc["remove_count"] = spec.remove_count;
  doc["Z"] = spec.Z;
  doc["merge_factor_grid"] = spec.merge_factor_grid;
  doc["output_scale_grid"] = spec.output_scale_grid;
  doc["importance_grid"] = spec.importance_grid;
  doc["mode"] = to_string(spec.mode);
  return doc;
}

SpaceSpec space_spec_from_json(const json& doc) {
  constexpr const char* kWhat = "space";
  if (!doc.is_object()) throw ParseError("space: expected a JSON object");
  SpaceSpec spec;
  spec.l = get_field<int>(doc, "l", kWhat);
  spec.K = get_field<int>(doc, "K", kWhat);
  if (!doc.contains("sparsity")) throw ParseError("space: missing field 'sparsity'");
  const json& s = doc.at("sparsity");
  if (s.is_string()) spec.sparsity = Rational::parse(s.get<std::string>());
  else if (s.is_number()) spec.sparsity = Rational::from_double(s.get<double>());
  else throw ParseError("space: field 'sparsity' must be a number or \"p/q\" string");
  spec.remove_count = ceil_remove_count(spec.l, spec.sparsity);
  if (doc.contains("remove_count")) {
    const int given = get_field<int>(doc, "remove_count", kWhat);
    if (given != spec.remove_count)
      throw ConfigError("space: remove_count " + std::to_string(given) + " != ceil(l*s) = " +
                        std::to_string(spec.remove_count));
  }
  spec.Z = get_or<int>(doc, "Z", 1, kWhat);
  spec.merge_factor_grid =
      get_or<std::vector<double>>(doc, "merge_factor_grid", default_merge_factor_grid(), kWhat);
  spec.output_scale_grid =
      get_or<std::vector<double>>(doc, "output_scale_grid", default_output_scale_grid(), kWhat);
  spec.importance_grid =
      get_or<std::vector<double>>(doc, "importance_grid", default_importance_grid(), kWhat);
  spec.mode = parse_space_mode(get_or<std::string>(doc, "mode", "full", kWhat));
  check_spec(spec);
  return spec;
}

json to_json(const Config& config) {
  json doc;
  if (const auto* p = std::get_if<PruneConfig>(&config)) {
    doc["r"] = p->r;
    doc["c"] = p->c;
    doc["merge_factor"] = p->merge_factor;
    doc["output_scale"] = p->output_scale;
    doc["m"] = p->m;
  } else {
    const auto& f = std::get<FoldConfig>(config);
    doc["fold_select"] = f.fold_select;
    doc["importance"] = f.importance;
  }
  return doc;
}

Config config_from_json(const json& doc) {
  constexpr const char* kWhat = "config";
  if (!doc.is_object()) throw ParseError("config: expected a JSON object");
  if (doc.contains("fold_select")) {
    FoldConfig f;
    f.fold_select = get_field<std::vector<std::uint8_t>>(doc, "fold_select", kWhat);
    f.importance = get_field<std::vector<double>>(doc, "importance", kWhat);
    return f;
  }
  PruneConfig p;
  p.r = get_field<std::vector<std::uint8_t>>(doc, "r", kWhat);
  const auto l = p.r.size();
  p.c = get_or<std::vector<std::vector<std::uint8_t>>>(doc, "c", std::vector<std::vector<std::uint8_t>>(l), kWhat);
  p.merge_factor = get_or<std::vector<double>>(doc, "merge_factor", std::vector<double>(l, 1.0), kWhat);
  p.output_scale = get_or<std::vector<double>>(doc, "output_scale", std::vector<double>(l, 1.0), kWhat);
  p.m = get_or<std::vector<int>>(doc, "m", std::vector<int>(l, 1), kWhat);
  return p;
}

}  // namespace layerstitch
