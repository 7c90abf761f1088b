#include "belt2/data/sample.hpp"

#include <fstream>

#include <json.hpp>

#include "belt2/error.hpp"

namespace belt2 {

using nlohmann::json;

void validate_sample(const EegSample& s, std::int64_t max_words) {
  if (s.words.empty()) throw SchemaError("sample '" + s.id + "' has no words");
  if (s.length() > max_words) {
    throw SchemaError("sample '" + s.id + "' has " + std::to_string(s.length()) + " words, limit is " +
                      std::to_string(max_words));
  }
  const auto d = s.words.front().eeg.size();
  if (d == 0) throw SchemaError("sample '" + s.id + "' has empty eeg vectors");
  for (const auto& w : s.words) {
    if (w.eeg.size() != d) {
      throw DimMismatch("sample '" + s.id + "': eeg length " + std::to_string(w.eeg.size()) + " after " +
                        std::to_string(d));
    }
  }
  if (s.sentiment && (*s.sentiment < 0 || *s.sentiment >= kNumSentimentClasses)) {
    throw SchemaError("sample '" + s.id + "': sentiment " + std::to_string(*s.sentiment) + " out of range");
  }
}

std::string to_json_line(const EegSample& s) {
  json words = json::array();
  for (const auto& w : s.words) words.push_back({{"w", w.word}, {"eeg", w.eeg}});
  json j = {{"id", s.id}, {"subject", s.subject}, {"text", s.text}};
  if (s.sentiment) j["sentiment"] = *s.sentiment;
  if (s.summary) j["summary"] = *s.summary;
  j["words"] = std::move(words);
  return j.dump();
}

namespace {

template <typename T>
T field(const json& j, const char* name, std::size_t line_no) {
  if (!j.contains(name)) throw SchemaError("line " + std::to_string(line_no) + ": missing field '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw SchemaError("line " + std::to_string(line_no) + ": field '" + name + "' has the wrong type");
  }
}

}  // namespace

EegSample parse_json_line(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("line " + std::to_string(line_no) + ": expected a JSON object");
  EegSample s;
  s.id = field<std::string>(j, "id", line_no);
  s.subject = field<std::string>(j, "subject", line_no);
  s.text = field<std::string>(j, "text", line_no);
  if (j.contains("sentiment") && !j["sentiment"].is_null()) s.sentiment = field<int>(j, "sentiment", line_no);
  if (j.contains("summary") && !j["summary"].is_null()) s.summary = field<std::string>(j, "summary", line_no);
  const auto words = field<json>(j, "words", line_no);
  if (!words.is_array()) throw SchemaError("line " + std::to_string(line_no) + ": 'words' must be an array");
  for (const auto& w : words) {
    if (!w.is_object()) throw SchemaError("line " + std::to_string(line_no) + ": word entries must be objects");
    s.words.push_back({field<std::string>(w, "w", line_no), field<std::vector<double>>(w, "eeg", line_no)});
  }
  return s;
}

std::vector<EegSample> load_jsonl(const std::filesystem::path& path, std::int64_t max_words) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<EegSample> out;
  std::string line;
  std::size_t line_no = 0;
  std::int64_t dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    EegSample s = parse_json_line(line, line_no);
    validate_sample(s, max_words);
    if (dim >= 0 && s.dim() != dim) {
      throw DimMismatch("line " + std::to_string(line_no) + ": D=" + std::to_string(s.dim()) + ", earlier lines D=" +
                        std::to_string(dim));
    }
    dim = s.dim();
    out.push_back(std::move(s));
  }
  return out;
}

void save_jsonl(const std::filesystem::path& path, const std::vector<EegSample>& samples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : samples) out << to_json_line(s) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace belt2
