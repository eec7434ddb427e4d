#pragma once

namespace arcflow::util {

/// Keeps freed tape memory in the process heap between training steps
/// instead of returning it to the OS (no-op outside glibc).
void tune_allocator();

}  // namespace arcflow::util
