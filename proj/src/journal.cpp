#include "layerstitch/journal.hpp"

#include <sstream>

#include "layerstitch/error.hpp"
#include "layerstitch/space_json.hpp"

namespace layerstitch {

using nlohmann::json;

json to_json(const TrialRecord& rec) {
  json doc;
  doc["t"] = rec.t;
  doc["sweep"] = rec.sweep;
  doc["bracket_s"] = rec.bracket_s;
  doc["stage_i"] = rec.stage_i;
  doc["budget"] = rec.budget;
  doc["lambda"] = rec.lambda.values;
  doc["encoding"] = rec.encoding;
  doc["config"] = to_json(rec.config);
  doc["objectives"] = rec.objectives.values;
  doc["scalarized"] = rec.scalarized;
  doc["seed"] = rec.seed;
  doc["status"] = rec.status == TrialStatus::kOk ? "ok" : "failed";
  return doc;
}

TrialRecord trial_from_json(const json& doc) {
  try {
    TrialRecord rec;
    rec.t = doc.at("t").get<std::size_t>();
    rec.sweep = doc.value("sweep", 0);
    rec.bracket_s = doc.at("bracket_s").get<int>();
    rec.stage_i = doc.at("stage_i").get<int>();
    rec.budget = doc.at("budget").get<std::size_t>();
    rec.lambda.values = doc.at("lambda").get<std::vector<double>>();
    rec.encoding = doc.at("encoding").get<std::vector<double>>();
    rec.config = config_from_json(doc.at("config"));
    rec.objectives.values = doc.at("objectives").get<std::vector<double>>();
    rec.scalarized = doc.at("scalarized").get<double>();
    rec.seed = doc.value("seed", std::uint64_t{0});
    const auto status = doc.at("status").get<std::string>();
    if (status != "ok" && status != "failed") throw ParseError("journal: unknown status '" + status + "'");
    rec.status = status == "ok" ? TrialStatus::kOk : TrialStatus::kFailed;
    return rec;
  } catch (const json::exception& e) {
    throw ParseError(std::string("journal: malformed trial record: ") + e.what());
  }
}

std::vector<TrialRecord> read_journal(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open journal: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<TrialRecord> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // torn tail
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      out.push_back(trial_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ParseError("journal line " + std::to_string(out.size() + 1) + ": " + e.what());
    }
  }
  return out;
}

JournalWriter::JournalWriter(const std::filesystem::path& path, std::size_t keep_lines) : path_(path) {
  std::string kept;
  if (keep_lines > 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open journal: " + path.string());
    std::string line;
    for (std::size_t i = 0; i < keep_lines && std::getline(in, line); ++i) kept += line + "\n";
  }
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open journal for writing: " + path.string());
  out_ << kept;
  out_.flush();
}

void JournalWriter::append(const TrialRecord& record) {
  out_ << to_json(record).dump() << '\n';
  out_.flush();
  if (!out_) throw IoError("failed writing journal: " + path_.string());
}

}  // namespace layerstitch
