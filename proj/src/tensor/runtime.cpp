#include "gfn/runtime.hpp"

#include <Eigen/Core>

namespace gfn {

void set_threads(int n) {
  if (n > 0) Eigen::setNbThreads(n);
}

int threads() { return Eigen::nbThreads(); }

}  // namespace gfn
