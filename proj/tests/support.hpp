#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hilml/error.hpp"
#include "hilml/table.hpp"

namespace hilml::testing {

using Num = std::optional<double>;
using Str = std::optional<std::string>;

inline Column num(std::string name, std::vector<Num> v) { return Column::numeric(std::move(name), std::move(v)); }
inline Column cat(std::string name, std::vector<Str> v) { return Column::categorical(std::move(name), std::move(v)); }

inline Dataset dataset(std::string name, std::vector<Column> cols) {
  Dataset d;
  d.name = std::move(name);
  d.table = Table(std::move(cols));
  return d;
}

inline DatasetPtr shared(Dataset d) { return std::make_shared<const Dataset>(std::move(d)); }

// Runs `body` and returns the code of the hilml::Error it throws; fails the
// test when nothing (or something else) is thrown.
template <class F>
std::optional<ErrorCode> error_of(F&& body) {
  try {
    body();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected hilml::Error";
  return std::nullopt;
}

}  // namespace hilml::testing
