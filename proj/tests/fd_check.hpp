// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central-difference gradient checking.  The caller provides a pure loss
// re-evaluation, a coordinate nudger, and the analytic gradient laid out flat
// in the same coordinate order; fd_compare reports per-coordinate relative
// error statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace testutil {

struct FdReport {
  int total = 0;
  int within_tight = 0;   // rel err < tight threshold
  double max_rel = 0.0;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;

  double frac_within_tight() const {
    return total == 0 ? 1.0 : static_cast<double>(within_tight) / total;
  }
};

// loss():      re-evaluates the loss at the current parameters (no grads).
// nudge(i, d): adds d to flat coordinate i.
// analytic:    analytic gradient, one entry per flat coordinate.
inline FdReport fd_compare(const std::function<double()>& loss,
                           const std::function<void(int, double)>& nudge,
                           const std::vector<double>& analytic,
                           double eps = 1e-5, double tight = 1e-2) {
  FdReport rep;
  rep.total = static_cast<int>(analytic.size());
  for (int i = 0; i < rep.total; ++i) {
    nudge(i, eps);
    const double up = loss();
    nudge(i, -2.0 * eps);
    const double down = loss();
    nudge(i, eps);  // restore
    const double fd = (up - down) / (2.0 * eps);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
    if (rel < tight) ++rep.within_tight;
    if (rel > rep.max_rel) {
      rep.max_rel = rel;
      rep.worst_analytic = a;
      rep.worst_fd = fd;
    }
  }
  return rep;
}

}  // namespace testutil
