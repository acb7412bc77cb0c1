#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sbm/common.hpp"

namespace sbm::testfn {

/// A named smooth test function with its first two derivatives.
struct TestFunction {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> d1;
  std::function<double(double)> d2;
};

/// Registry lookup. Names and parameters:
///   one                      phi = 1
///   linear                   phi = x
///   gaussian  [center, width]
///   poly-bc   [a, b]         (x-a)(2b-a-x)/(b-a)^2 on [a, b]: phi(a) = 0, phi'(b) = 0
///   poly-tail [a, b]         ((x-a)(b-x))^2 / ((b-a)/2)^4 on [a, b]: vanishes with its slope at b
///   dual-bc   [a, b]         s - 5/2 s^2 + 4/3 s^3, s = (x-a)/(b-a): as poly-bc with zero integral
///   dual-tail [a, b]         16 (s - s^2)^2 (1 - 2s): as poly-tail with zero integral
///   hk        [k]            appendix function h_k on [0, 1]
TestFunction by_name(const std::string& name, const std::vector<double>& params = {});
const std::vector<std::string>& registry();

/// Values, second derivatives and squares sampled on a grid.
struct Sampled {
  std::vector<double> f;
  std::vector<double> d2;
  std::vector<double> f2;
};
Sampled sample(const TestFunction& phi, const Grid1D& grid);

/// Dual test function for interval [a, b] of a partition; `last` marks the unbounded interval
/// truncated at b = L. Zero integral, so mass flowing in through a leaves the pairing unchanged.
TestFunction dual_function(double a, double b, bool last);

/// Throws DomainError naming the violated constraint: phi(a) = 0 always; phi'(b) = 0 for inner
/// intervals; phi(b) = phi'(b) = 0 for the truncated last interval.
void check_dual_constraints(const TestFunction& phi, double a, double b, bool last, double tol = 1e-9);

/// C^1 functions on [0, 1] with known endpoint data, used against the appendix limits.
struct EndpointFunction {
  std::string name;
  std::function<double(double)> f;
  double f0, f1, df0, df1;
};
EndpointFunction endpoint_function(const std::string& name);
const std::vector<std::string>& endpoint_registry();

}  // namespace sbm::testfn
