#pragma once

#include <filesystem>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerstitch/surrogate.hpp"

namespace layerstitch {

nlohmann::json to_json(const TrialRecord& record);
TrialRecord trial_from_json(const nlohmann::json& doc);

// Reads every complete line; a torn final line (no trailing newline) from an
// interrupted write is ignored.
std::vector<TrialRecord> read_journal(const std::filesystem::path& path);

// Append-only JSONL writer; every line is flushed before returning.
class JournalWriter {
 public:
  // `keep_lines` complete lines of an existing file are preserved; anything
  // after them is truncated.
  JournalWriter(const std::filesystem::path& path, std::size_t keep_lines = 0);
  void append(const TrialRecord& record);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace layerstitch
