#pragma once

#include <functional>

#include "dpq/matrix.hpp"

namespace dpq {

inline constexpr double kGradCheckAbsFloor = 1e-8;

// Compares `analytic` against central differences of `f` at `x`.
//
// Per element the error is |a - n| / max(|n|, floor), and differences whose
// magnitude is below the floor count as zero error. Returns the maximum over
// all elements.
double finite_diff_check(const std::function<double(const Matrix&)>& f, const Matrix& x,
                         const Matrix& analytic, double h = 1e-5,
                         double abs_floor = kGradCheckAbsFloor);

// Central-difference gradient of f at x.
Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h);

}  // namespace dpq
