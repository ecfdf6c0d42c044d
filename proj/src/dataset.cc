// Copyright 2026 The fib Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fib/dataset.h"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>

#include "fib/binding.h"
#include "fib/error.h"

namespace fib {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum class DocKind { kDefinition, kSolution, kTrace };

DocKind classify(const json& doc) {
  if (doc.contains("workload")) return DocKind::kTrace;
  if (doc.contains("op_type") || doc.contains("axes")) return DocKind::kDefinition;
  return DocKind::kSolution;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string safe_component(std::string s) {
  for (char& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ||
                    c == '.';
    if (!ok) c = '_';
  }
  if (s.empty() || s == "." || s == "..") s = "_";
  return s;
}

}  // namespace

std::vector<Workload> Dataset::workloads(const std::string& definition) const {
  std::vector<Workload> out;
  std::set<std::string> seen;
  for (const TraceRecord& t : traces) {
    if (t.definition != definition || t.evaluation) continue;
    if (seen.insert(t.workload.uuid).second) out.push_back(t.workload);
  }
  return out;
}

std::vector<TraceRecord> Dataset::evaluations() const {
  std::vector<TraceRecord> out;
  for (const TraceRecord& t : traces) {
    if (t.evaluation) out.push_back(t);
  }
  return out;
}

std::vector<const Solution*> Dataset::solutions_for(const std::string& definition) const {
  std::vector<const Solution*> out;
  for (const auto& [name, s] : solutions) {
    if (s.definition == definition) out.push_back(&s);
  }
  return out;
}

JobCatalog Dataset::catalog() const {
  JobCatalog c;
  c.definitions = definitions;
  c.solutions = solutions;
  for (const TraceRecord& t : traces) c.workloads.emplace(t.workload.uuid, t.workload);
  return c;
}

ScanResult scan_dataset(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::kIo, "not a dataset directory: " + root.string());
  }
  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::end(it);
       it.increment(ec)) {
    // Hidden entries (such as the harness work cache) are not documents.
    if (it->path().filename().string().starts_with(".")) {
      if (it->is_directory()) it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file() && it->path().extension() == ".json") files.push_back(it->path());
  }
  if (ec) throw Error(ErrorCode::kIo, "cannot list " + root.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());

  ScanResult r;
  r.dataset.root = root;
  auto violation = [&](const fs::path& f, const std::string& field, const std::string& msg) {
    r.violations.push_back({fs::relative(f, root, ec), field, msg});
  };
  std::vector<std::pair<fs::path, TraceRecord>> traces;
  for (const fs::path& f : files) {
    try {
      json doc;
      try {
        doc = json::parse(read_text(f));
      } catch (const json::parse_error& e) {
        violation(f, "", std::string("invalid JSON: ") + e.what());
        continue;
      }
      if (!doc.is_object()) {
        violation(f, "", "expected a JSON object");
        continue;
      }
      switch (classify(doc)) {
        case DocKind::kDefinition: {
          Definition d = parse_definition(doc);
          validate_definition(d);
          if (r.dataset.definitions.count(d.name)) {
            violation(f, "name", "duplicate definition " + d.name);
            continue;
          }
          r.dataset.origin[d.name] = f;
          r.dataset.definitions.emplace(d.name, std::move(d));
          break;
        }
        case DocKind::kSolution: {
          Solution s = parse_solution(doc);
          if (r.dataset.solutions.count(s.name)) {
            violation(f, "name", "duplicate solution " + s.name);
            continue;
          }
          r.dataset.origin[s.name] = f;
          r.dataset.solutions.emplace(s.name, std::move(s));
          break;
        }
        case DocKind::kTrace:
          traces.emplace_back(f, parse_trace_json(doc));
          break;
      }
    } catch (const Error& e) {
      violation(f, e.path(), e.what());
    }
  }

  // Cross-document checks: names resolve (by name first, inline otherwise)
  // and workloads bind against their definition.
  for (auto& [f, t] : traces) {
    const Definition* d = nullptr;
    if (auto it = r.dataset.definitions.find(t.definition); it != r.dataset.definitions.end()) {
      d = &it->second;
    } else if (t.inline_definition) {
      d = &*t.inline_definition;
    }
    if (d == nullptr) {
      violation(f, "definition", "unknown definition " + t.definition);
      continue;
    }
    if (t.solution && !t.inline_solution && !r.dataset.solutions.count(*t.solution)) {
      violation(f, "solution", "unknown solution " + *t.solution);
      continue;
    }
    try {
      bind_workload(*d, t.workload);
    } catch (const Error& e) {
      violation(f, e.path().empty() ? "workload" : e.path(), e.what());
      continue;
    }
    if (t.inline_definition && !r.dataset.definitions.count(t.definition)) {
      r.dataset.definitions.emplace(t.definition, *t.inline_definition);
    }
    if (t.inline_solution && !r.dataset.solutions.count(*t.solution)) {
      r.dataset.solutions.emplace(*t.solution, *t.inline_solution);
    }
    r.dataset.traces.push_back(std::move(t));
  }
  for (const auto& [name, s] : r.dataset.solutions) {
    if (!r.dataset.definitions.count(s.definition)) {
      violation(r.dataset.origin.count(name) ? r.dataset.origin.at(name) : root, "definition",
                "solution " + name + " refers to unknown definition " + s.definition);
    }
  }
  return r;
}

Dataset load_dataset(const fs::path& root) {
  ScanResult r = scan_dataset(root);
  if (!r.violations.empty()) {
    const Violation& v = r.violations.front();
    throw Error(ErrorCode::kSchema, v.file.string() + ": " + v.message, v.field);
  }
  return std::move(r.dataset);
}

std::vector<fs::path> append_records(const fs::path& root,
                                     const std::vector<TraceRecord>& records) {
  static std::atomic<uint64_t> counter{0};
  std::vector<fs::path> out;
  for (const TraceRecord& t : records) {
    const fs::path dir = root / "traces" / safe_component(t.definition);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
    const std::string stem = safe_component(t.solution.value_or("workload")) + "__" +
                             safe_component(t.workload.uuid);
    fs::path path;
    // Never overwrite: probe for a free name.
    do {
      path = dir / (stem + "__" + std::to_string(counter.fetch_add(1)) + ".json");
    } while (fs::exists(path));
    std::ofstream of(path, std::ios::binary | std::ios::trunc);
    of << serialize_trace(t) << "\n";
    if (!of) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out.push_back(path);
  }
  return out;
}

}  // namespace fib
