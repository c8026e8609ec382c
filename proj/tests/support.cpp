#include "support.hpp"

namespace bangbang::testing {

BangBangControl rigid_nominal() {
  return BangBangControl(on_off_bounds(4), {1.0, 0.0, 1.0, 0.0},
                         {{0.13659293964433811, 2}, {0.44246092671887821, 0}, {1.2083224749893384, 1}},
                         1.4940045559053772);
}

}  // namespace bangbang::testing
