#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "layerstitch/error.hpp"
#include "layerstitch/zoo.hpp"

namespace layerstitch {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw ParseError("checkpoint: missing field '" + where + key + "'");
  return obj.at(key);
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ParseError("checkpoint: field '" + where + "' is not a number");
  return v.get<double>();
}

int positive_int(const json& obj, const char* key) {
  const json& v = field(obj, key, "");
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ParseError(std::string("checkpoint: field '") + key + "' is not a non-negative integer");
  return v.get<int>();
}

Matrix matrix_from_json(const json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError("checkpoint: field '" + where + "' is not an array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(v.at(0).is_array() ? v.at(0).size() : 0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = v.at(static_cast<std::size_t>(r));
    const std::string here = where + "[" + std::to_string(r) + "]";
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ParseError("checkpoint: field '" + here + "' is ragged or not an array");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = number(row.at(static_cast<std::size_t>(c)), here + "[" + std::to_string(c) + "]");
  }
  return m;
}

Vector vector_from_json(const json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError("checkpoint: field '" + where + "' is not an array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = number(v.at(i), where + "[" + std::to_string(i) + "]");
  return out;
}

}  // namespace

void save_checkpoint(const LayeredModel& model, const std::filesystem::path& path) {
  model.check_shapes();
  json doc;
  doc["format_version"] = 1;
  doc["label"] = model.label;
  doc["input_dim"] = model.input_dim;
  doc["hidden_dim"] = model.hidden_dim;
  doc["num_layers"] = model.num_layers();
  doc["num_classes"] = model.num_classes;
  json blocks = json::array();
  for (const auto& b : model.blocks) {
    json jb;
    jb["W1"] = matrix_to_json(b.W1);
    jb["b1"] = vector_to_json(b.b1);
    jb["W2"] = matrix_to_json(b.W2);
    jb["b2"] = vector_to_json(b.b2);
    if (b.scale != 1.0) jb["scale"] = b.scale;
    blocks.push_back(std::move(jb));
  }
  doc["blocks"] = std::move(blocks);
  doc["head"] = {{"W", matrix_to_json(model.head.W)}, {"b", vector_to_json(model.head.b)}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

LayeredModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint " + path.string() + ": malformed JSON: " + e.what());
  }
  const json& version = field(doc, "format_version", "");
  if (!version.is_number_integer() || version.get<int>() != 1)
    throw ParseError("checkpoint: field 'format_version' must be 1");

  LayeredModel model;
  const json& label = field(doc, "label", "");
  if (!label.is_string()) throw ParseError("checkpoint: field 'label' is not a string");
  model.label = label.get<std::string>();
  model.input_dim = positive_int(doc, "input_dim");
  model.hidden_dim = positive_int(doc, "hidden_dim");
  model.num_classes = positive_int(doc, "num_classes");
  const int declared_layers = positive_int(doc, "num_layers");

  const json& blocks = field(doc, "blocks", "");
  if (!blocks.is_array()) throw ParseError("checkpoint: field 'blocks' is not an array");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string where = "blocks[" + std::to_string(i) + "].";
    const json& jb = blocks.at(i);
    ResidualBlock b;
    b.W1 = matrix_from_json(field(jb, "W1", where), where + "W1");
    b.b1 = vector_from_json(field(jb, "b1", where), where + "b1");
    b.W2 = matrix_from_json(field(jb, "W2", where), where + "W2");
    b.b2 = vector_from_json(field(jb, "b2", where), where + "b2");
    if (jb.contains("scale")) b.scale = number(jb.at("scale"), where + "scale");
    model.blocks.push_back(std::move(b));
  }
  const json& head = field(doc, "head", "");
  model.head.W = matrix_from_json(field(head, "W", "head."), "head.W");
  model.head.b = vector_from_json(field(head, "b", "head."), "head.b");

  if (declared_layers != model.num_layers())
    throw IntegrityError("checkpoint " + path.string() + ": num_layers is " +
                         std::to_string(declared_layers) + " but " +
                         std::to_string(model.num_layers()) + " blocks are present");
  model.check_shapes();
  return model;
}

}  // namespace layerstitch
