// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "occ/checks.hpp"

namespace occ::testing {

using checks::SmallGaf;

} // namespace occ::testing
