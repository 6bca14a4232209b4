// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace forge {

/// Worker count: FORGE_THREADS when set to a positive integer, otherwise the
/// number of hardware threads (at least 1).
std::size_t thread_count();

/// Runs body(i) for i in [0, n) on up to thread_count() threads. Each index is
/// visited exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The first exception thrown by any
/// body is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace forge
