// Simulate one world with 80% outliers, keep the largest group-4 consistent
// set of ranges, and solve the range-SLAM problem with it.

#include <iostream>

#include "gkcm/experiments.hpp"

int main() {
  using namespace gkcm;
  WorldConfig world = montecarlo_world();
  world.seed = 7;
  const Dataset ds = generate_world(world);

  for (Method m : {Method::gkcm, Method::pcm}) {
    SelectionConfig cfg;
    cfg.method = m;
    const Selection sel = select_measurements(ds, cfg);
    const TrialResult r = solve_selection(ds, sel);
    std::cout << to_string(m) << ": kept " << r.selected << " of " << ds.ranges.size() << " ranges, TPR " << r.tpr
              << ", FPR " << r.fpr << ", normalized chi2 " << r.chi2 << ", beacon error " << r.beacon_error
              << " m\n";
  }
}
