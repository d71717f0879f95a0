// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace occ {

/// Caps OpenMP workers (threads <= 0 keeps the default) and keeps large freed blocks in the
/// process heap so per-iteration tapes reuse memory instead of faulting in fresh pages.
void configure_runtime(int threads);

int worker_threads();

} // namespace occ
