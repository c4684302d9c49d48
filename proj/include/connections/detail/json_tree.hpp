// Copyright 2026 The Connections Workbench Authors
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

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "connections/error.hpp"

namespace connections::detail {

// Order-preserving JSON tree that keeps duplicate object keys. nlohmann's
// DOM collapses repeated keys, which would hide a repeated category name.
struct JsonTree {
  enum class Kind { Null, Boolean, Number, String, Array, Object };

  Kind kind = Kind::Null;
  std::string text;               // String payload
  std::vector<std::string> keys;  // Object keys, parallel to children
  std::vector<JsonTree> children; // Array elements or object values
};

class JsonTreeBuilder : public nlohmann::json_sax<nlohmann::json> {
 public:
  bool null() override { return leaf(JsonTree::Kind::Null); }
  bool boolean(bool) override { return leaf(JsonTree::Kind::Boolean); }
  bool number_integer(number_integer_t) override { return leaf(JsonTree::Kind::Number); }
  bool number_unsigned(number_unsigned_t) override { return leaf(JsonTree::Kind::Number); }
  bool number_float(number_float_t, const string_t&) override {
    return leaf(JsonTree::Kind::Number);
  }
  bool string(string_t& val) override {
    JsonTree node;
    node.kind = JsonTree::Kind::String;
    node.text = val;
    return place(std::move(node));
  }
  bool binary(binary_t&) override { return leaf(JsonTree::Kind::Null); }

  bool start_object(std::size_t) override {
    JsonTree node;
    node.kind = JsonTree::Kind::Object;
    stack_.push_back(std::move(node));
    return true;
  }
  bool key(string_t& val) override {
    stack_.back().keys.push_back(val);
    return true;
  }
  bool end_object() override { return close(); }

  bool start_array(std::size_t) override {
    JsonTree node;
    node.kind = JsonTree::Kind::Array;
    stack_.push_back(std::move(node));
    return true;
  }
  bool end_array() override { return close(); }

  bool parse_error(std::size_t, const std::string&,
                   const nlohmann::detail::exception& ex) override {
    error_ = ex.what();
    return false;
  }

  const std::string& error() const { return error_; }
  JsonTree take() { return std::move(root_); }

 private:
  bool leaf(JsonTree::Kind kind) {
    JsonTree node;
    node.kind = kind;
    return place(std::move(node));
  }
  bool place(JsonTree node) {
    if (stack_.empty()) {
      root_ = std::move(node);
    } else {
      stack_.back().children.push_back(std::move(node));
    }
    return true;
  }
  bool close() {
    JsonTree done = std::move(stack_.back());
    stack_.pop_back();
    return place(std::move(done));
  }

  std::vector<JsonTree> stack_;
  JsonTree root_;
  std::string error_;
};

inline JsonTree parse_json_tree(std::string_view text) {
  JsonTreeBuilder builder;
  bool ok = nlohmann::json::sax_parse(text.begin(), text.end(), &builder);
  if (!ok) {
    throw Error(ErrorCode::MalformedJson, builder.error().empty() ? "invalid JSON" : builder.error());
  }
  return builder.take();
}

}  // namespace connections::detail
