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

#include "fib/constraint.h"

#include <cctype>
#include <limits>
#include <vector>

#include "fib/error.h"

namespace fib {

struct Constraint::Node {
  enum class Kind { kInt, kName, kIndex, kBinary };
  Kind kind;
  int64_t number = 0;  // literal, or the index for kIndex
  std::string name;
  std::string op;  // + - * // == != <= >= < >
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
};

namespace {

using Node = Constraint::Node;
using NodePtr = std::shared_ptr<const Node>;

struct Token {
  enum class Kind { kInt, kName, kOp, kLBracket, kRBracket, kItem, kEnd };
  Kind kind;
  std::string text;
};

[[noreturn]] void grammar_error(std::string_view text, const std::string& why) {
  throw Error(ErrorCode::kConstraintGrammar,
              "'" + std::string(text) + "': " + why);
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back({Token::Kind::kInt, std::string(text.substr(i, j - i))});
      i = j;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) {
        ++j;
      }
      out.push_back({Token::Kind::kName, std::string(text.substr(i, j - i))});
      i = j;
    } else if (text.substr(i, 7) == ".item()") {
      out.push_back({Token::Kind::kItem, ".item()"});
      i += 7;
    } else if (c == '[') {
      out.push_back({Token::Kind::kLBracket, "["});
      ++i;
    } else if (c == ']') {
      out.push_back({Token::Kind::kRBracket, "]"});
      ++i;
    } else {
      static const char* kOps[] = {"==", "!=", "<=", ">=", "//", "<", ">",
                                   "+",  "-",  "*"};
      bool matched = false;
      for (const char* op : kOps) {
        const std::string_view sv(op);
        if (text.substr(i, sv.size()) == sv) {
          out.push_back({Token::Kind::kOp, std::string(sv)});
          i += sv.size();
          matched = true;
          break;
        }
      }
      if (!matched) {
        grammar_error(text, std::string("unexpected character '") + c + "'");
      }
    }
  }
  out.push_back({Token::Kind::kEnd, ""});
  return out;
}

class Parser {
 public:
  Parser(std::string_view text, std::vector<Token> tokens,
         std::set<std::string>& axis_names, std::set<std::string>& tensor_names)
      : text_(text),
        tokens_(std::move(tokens)),
        axis_names_(axis_names),
        tensor_names_(tensor_names) {}

  NodePtr parse_constraint() {
    NodePtr lhs = parse_sum();
    const Token& t = peek();
    if (t.kind != Token::Kind::kOp || !is_comparison(t.text)) {
      grammar_error(text_, "expected a comparison operator");
    }
    const std::string op = next().text;
    NodePtr rhs = parse_sum();
    if (peek().kind != Token::Kind::kEnd) {
      grammar_error(text_, "trailing input after '" + peek().text + "'");
    }
    return binary(op, lhs, rhs);
  }

 private:
  static bool is_comparison(const std::string& op) {
    return op == "==" || op == "!=" || op == "<=" || op == ">=" || op == "<" ||
           op == ">";
  }

  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }

  static NodePtr binary(const std::string& op, NodePtr lhs, NodePtr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::kBinary;
    n->op = op;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
  }

  NodePtr parse_sum() {
    NodePtr lhs = parse_product();
    while (peek().kind == Token::Kind::kOp &&
           (peek().text == "+" || peek().text == "-")) {
      const std::string op = next().text;
      lhs = binary(op, lhs, parse_product());
    }
    return lhs;
  }

  NodePtr parse_product() {
    NodePtr lhs = parse_atom();
    while (peek().kind == Token::Kind::kOp &&
           (peek().text == "*" || peek().text == "//")) {
      const std::string op = next().text;
      lhs = binary(op, lhs, parse_atom());
    }
    return lhs;
  }

  int64_t parse_int(const std::string& digits) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(digits, &used);
      return static_cast<int64_t>(v);
    } catch (const std::exception&) {
      grammar_error(text_, "integer literal out of range: " + digits);
    }
  }

  NodePtr parse_atom() {
    const Token& t = next();
    auto n = std::make_shared<Node>();
    if (t.kind == Token::Kind::kInt) {
      n->kind = Node::Kind::kInt;
      n->number = parse_int(t.text);
      return n;
    }
    if (t.kind != Token::Kind::kName) {
      grammar_error(text_, t.kind == Token::Kind::kEnd
                               ? std::string("unexpected end of expression")
                               : "unexpected token '" + t.text + "'");
    }
    n->name = t.text;
    if (peek().kind != Token::Kind::kLBracket) {
      n->kind = Node::Kind::kName;
      axis_names_.insert(n->name);
      return n;
    }
    next();  // [
    bool negative = false;
    if (peek().kind == Token::Kind::kOp && peek().text == "-") {
      next();
      negative = true;
    }
    if (peek().kind != Token::Kind::kInt) {
      grammar_error(text_, "tensor index must be an integer literal");
    }
    n->kind = Node::Kind::kIndex;
    n->number = parse_int(next().text) * (negative ? -1 : 1);
    if (next().kind != Token::Kind::kRBracket) grammar_error(text_, "expected ']'");
    if (peek().kind == Token::Kind::kItem) next();
    tensor_names_.insert(n->name);
    return n;
  }

  std::string_view text_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::set<std::string>& axis_names_;
  std::set<std::string>& tensor_names_;
};

int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int64_t eval_node(const Node& n, const AxisValues& axes,
                  const TensorMap& tensors, const std::string& text) {
  switch (n.kind) {
    case Node::Kind::kInt:
      return n.number;
    case Node::Kind::kName: {
      auto it = axes.find(n.name);
      if (it == axes.end()) {
        throw Error(ErrorCode::kUnboundName,
                    "'" + n.name + "' is not bound in '" + text + "'");
      }
      return it->second;
    }
    case Node::Kind::kIndex: {
      const Tensor* t = tensors.find(n.name);
      if (t == nullptr) {
        throw Error(ErrorCode::kUnboundName,
                    "tensor '" + n.name + "' is not materialized in '" + text + "'");
      }
      if (!is_integer(t->dtype())) {
        throw Error(ErrorCode::kNonIntegerTensorIndexed,
                    "'" + n.name + "' has dtype " +
                        std::string(dtype_name(t->dtype())));
      }
      const int64_t size = t->numel();
      const int64_t idx = n.number < 0 ? size + n.number : n.number;
      if (t->shape().size() > 1 || idx < 0 || idx >= size) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    n.name + "[" + std::to_string(n.number) + "] with " +
                        std::to_string(size) + " elements");
      }
      return t->ints()[static_cast<std::size_t>(idx)];
    }
    case Node::Kind::kBinary: {
      const int64_t a = eval_node(*n.lhs, axes, tensors, text);
      const int64_t b = eval_node(*n.rhs, axes, tensors, text);
      if (n.op == "+") return a + b;
      if (n.op == "-") return a - b;
      if (n.op == "*") return a * b;
      if (n.op == "//") {
        if (b == 0) {
          throw Error(ErrorCode::kConstraintViolated,
                      "division by zero in '" + text + "'");
        }
        return floor_div(a, b);
      }
      if (n.op == "==") return a == b;
      if (n.op == "!=") return a != b;
      if (n.op == "<=") return a <= b;
      if (n.op == ">=") return a >= b;
      if (n.op == "<") return a < b;
      if (n.op == ">") return a > b;
      break;
    }
  }
  throw Error(ErrorCode::kConstraintGrammar, "corrupt expression '" + text + "'");
}

}  // namespace

Constraint Constraint::parse(std::string_view text) {
  Constraint c;
  c.text_ = std::string(text);
  Parser parser(text, tokenize(text), c.axis_names_, c.tensor_names_);
  c.root_ = parser.parse_constraint();
  for (const auto& name : c.tensor_names_) {
    if (c.axis_names_.count(name)) {
      grammar_error(text, "'" + name + "' used both as axis and tensor");
    }
  }
  std::string norm;
  for (char ch : c.text_) {
    if (!std::isspace(static_cast<unsigned char>(ch))) norm.push_back(ch);
  }
  for (std::size_t pos; (pos = norm.find(".item()")) != std::string::npos;) {
    norm.erase(pos, 7);
  }
  c.normalized_ = std::move(norm);
  return c;
}

bool Constraint::evaluate(const AxisValues& axes, const TensorMap& tensors) const {
  return eval_node(*root_, axes, tensors, text_) != 0;
}

}  // namespace fib
