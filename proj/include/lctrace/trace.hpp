// Copyright 2026 The lctrace Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Line-delimited trace records: one JSON document per line, UTF-8. The first
// record is a header carrying the schema version; replay tooling refuses
// unknown versions. All numeric fields round-trip bit-exactly through the
// shortest-representation JSON float encoding.

#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lctrace/errors.hpp"
#include "lctrace/problem.hpp"

namespace lctrace {

inline constexpr const char* kTraceSchema = "lctrace-trace/1";

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector vector_from_json(const nlohmann::json& a) {
  Vector v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

/// Append-only sink for trace records. Owns nothing beyond the stream.
class TraceWriter {
 public:
  TraceWriter() = default;

  explicit TraceWriter(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Error("cannot open trace output: " + path);
    }
  }

  void write(const nlohmann::json& record) {
    records_.push_back(record);
    if (file_.is_open()) file_ << record.dump() << '\n';
  }

  void flush() {
    if (file_.is_open()) file_.flush();
  }

  const std::vector<nlohmann::json>& records() const { return records_; }

 private:
  std::ofstream file_;
  std::vector<nlohmann::json> records_;
};

/// Parse a trace stream, enforcing the schema version in the header record.
inline std::vector<nlohmann::json> read_trace_stream(std::istream& in) {
  std::vector<nlohmann::json> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("trace: malformed record: ") + e.what());
    }
  }
  if (records.empty()) throw ParseError("trace: empty file");
  const auto& head = records.front();
  if (!head.contains("type") || head["type"] != "header")
    throw ParseError("trace: first record is not a header");
  if (!head.contains("schema") || head["schema"] != kTraceSchema)
    throw ParseError("trace: unsupported schema version " +
                     (head.contains("schema") ? head["schema"].dump()
                                              : std::string("<missing>")));
  return records;
}

inline std::vector<nlohmann::json> read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace file: " + path);
  return read_trace_stream(in);
}

/// Remove wall-clock fields so two runs of the same manifest compare
/// byte-identically.
inline void strip_wall_clock(std::vector<nlohmann::json>& records) {
  for (auto& r : records) r.erase("wall_ms");
}

inline std::string dump_records(const std::vector<nlohmann::json>& records) {
  std::ostringstream out;
  for (const auto& r : records) out << r.dump() << '\n';
  return out.str();
}

}  // namespace lctrace
