#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace sliceroute {

// Training allocates and frees many mid-sized buffers per step. With glibc's
// defaults those go straight to mmap/munmap and the page faults dominate the
// system time, so keep them on the heap instead. No-op elsewhere.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace sliceroute
