#pragma once

// Umbrella header for the Predict-Then-Debias library.

#include "ptd/design.hpp"       // IWYU pragma: export
#include "ptd/errors.hpp"       // IWYU pragma: export
#include "ptd/estimators.hpp"   // IWYU pragma: export
#include "ptd/intervals.hpp"    // IWYU pragma: export
#include "ptd/matrix.hpp"       // IWYU pragma: export
#include "ptd/ptd_core.hpp"     // IWYU pragma: export
#include "ptd/rng.hpp"          // IWYU pragma: export
#include "ptd/simulation.hpp"   // IWYU pragma: export
