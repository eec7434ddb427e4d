#include "arcflow/util/alloc.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace arcflow::util {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace arcflow::util
