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

#ifndef FIB_DATASET_H_
#define FIB_DATASET_H_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fib/scheduler.h"
#include "fib/trace.h"

namespace fib {

// A problem found while loading: the file and a dotted field path.
struct Violation {
  std::filesystem::path file;
  std::string field;
  std::string message;
};

// A directory of *.json documents (searched recursively, hidden entries
// skipped). Each document is a
// Definition, a Solution, or a trace record (workload with an optional
// evaluation).
struct Dataset {
  std::filesystem::path root;
  std::map<std::string, Definition> definitions;
  std::map<std::string, Solution> solutions;
  std::vector<TraceRecord> traces;
  std::map<std::string, std::filesystem::path> origin;  // document name -> file

  // Workload-only records for a definition, first occurrence of each uuid,
  // in file order.
  std::vector<Workload> workloads(const std::string& definition) const;
  // Traces carrying an evaluation.
  std::vector<TraceRecord> evaluations() const;
  std::vector<const Solution*> solutions_for(const std::string& definition) const;
  JobCatalog catalog() const;
};

struct ScanResult {
  Dataset dataset;  // every document that parsed
  std::vector<Violation> violations;
};

// Never throws for document problems; those become violations. Throws
// Error(kIo) when `root` is not a readable directory.
ScanResult scan_dataset(const std::filesystem::path& root);

// scan_dataset, throwing Error(kSchema) for the first violation.
Dataset load_dataset(const std::filesystem::path& root);

// Writes each record as a new file under root/traces/<definition>/ and
// returns the paths. Existing files are never touched.
std::vector<std::filesystem::path> append_records(const std::filesystem::path& root,
                                                  const std::vector<TraceRecord>& records);

}  // namespace fib

#endif  // FIB_DATASET_H_
