#pragma once

namespace gfn {

/// Threads used by the GEMM kernels. 0 keeps the library default.
void set_threads(int n);
int threads();

}  // namespace gfn
