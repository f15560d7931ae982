#pragma once

#include "metadetect/meta_model.hpp"

namespace metadetect::detail {

/// Row counts agree, at least one row, targets in range for the task.
void check_fit_inputs(const Matrix& x, std::span<const double> y, Task task);

}  // namespace metadetect::detail
