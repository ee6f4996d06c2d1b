#pragma once

// Umbrella header. pmlb.hpp (HTTP fetch) is intentionally not included here;
// pull it in explicitly where network access is wanted.

#include "evopipe/dataset.hpp"
#include "evopipe/evolve.hpp"
#include "evopipe/harness.hpp"
#include "evopipe/learners.hpp"
#include "evopipe/matrix.hpp"
#include "evopipe/operators.hpp"
#include "evopipe/pipeline.hpp"
#include "evopipe/rng.hpp"
