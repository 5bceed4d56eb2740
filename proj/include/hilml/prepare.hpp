#pragma once

#include <string>
#include <variant>
#include <vector>

#include "hilml/table.hpp"

namespace hilml {

struct ExcludeColumn {
  std::string column;
};

/// Constant must match the column: a number for numeric, a string for
/// categorical/text, a timestamp string for temporal.
struct FillMissing {
  std::string column;
  Json constant;
};

/// Keeps rows whose value lies in [low, high]; rows with a missing value are kept.
struct DropRowsOutside {
  std::string column;
  double low = 0;
  double high = 0;
};

using PrepAction = std::variant<ExcludeColumn, FillMissing, DropRowsOutside>;

/// Applies `actions` in order and returns a new dataset; `input` is untouched.
/// Throws ColumnNotFound for unknown names, TypeMismatch for ill-typed actions.
Dataset prepare(const Dataset& input, const std::vector<PrepAction>& actions);

Json to_json(const PrepAction& action);
/// {"action": "exclude_column"|"fill_missing"|"drop_rows_outside", ...}
PrepAction prep_action_from_json(const Json& j);

}  // namespace hilml
