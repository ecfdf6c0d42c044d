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

#ifndef FIB_CONSTRAINT_H_
#define FIB_CONSTRAINT_H_

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>

#include "fib/tensor.h"

namespace fib {

using AxisValues = std::map<std::string, int64_t, std::less<>>;

// A relation between axes, e.g. "len_indptr == batch_size + 1" or
// "num_kv_indices == kv_indptr[-1].item()".
//
// Grammar (closed; anything else is a ConstraintGrammarError):
//   constraint := sum cmp sum            cmp := == | != | <= | >= | < | >
//   sum        := product (('+' | '-') product)*
//   product    := atom (('*' | '//') atom)*
//   atom       := INT | NAME | NAME '[' '-'? INT ']' ('.item()')?
class Constraint {
 public:
  struct Node;

  static Constraint parse(std::string_view text);

  // Text as written (serialized back verbatim).
  const std::string& text() const { return text_; }
  // Whitespace-free text with `.item()` removed; used for equality.
  const std::string& normalized() const { return normalized_; }

  // Plain identifiers, which must resolve to axes.
  const std::set<std::string>& axis_names() const { return axis_names_; }
  // Identifiers used with [index], which must be integer input tensors.
  const std::set<std::string>& tensor_names() const { return tensor_names_; }
  bool indexes_tensors() const { return !tensor_names_.empty(); }

  // Throws UnboundName, NonIntegerTensorIndexed or IndexOutOfRange.
  bool evaluate(const AxisValues& axes, const TensorMap& tensors) const;

  bool operator==(const Constraint& other) const {
    return normalized_ == other.normalized_;
  }

 private:
  std::string text_;
  std::string normalized_;
  std::set<std::string> axis_names_;
  std::set<std::string> tensor_names_;
  std::shared_ptr<const Node> root_;
};

inline bool eval_constraint(const Constraint& c, const AxisValues& axes,
                            const TensorMap& tensors) {
  return c.evaluate(axes, tensors);
}

}  // namespace fib

#endif  // FIB_CONSTRAINT_H_
