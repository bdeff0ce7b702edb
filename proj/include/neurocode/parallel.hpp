#pragma once

namespace neurocode {

/// Caps the OpenMP worker count at NEUROCODE_THREADS when that variable is set.
/// Returns the worker count in effect.
int configure_threads_from_env();

/// Worker count the parallel kernels will use.
int max_threads() noexcept;

}  // namespace neurocode
