#pragma once

// Umbrella header: constrained jump-diffusion simulation, controlled skeleton
// equations, action/quasi-potential minimization and Monte Carlo verification
// of large-deviation bounds.

#include "mvsde/linalg.hpp"
#include "mvsde/rng.hpp"
#include "mvsde/domain.hpp"
#include "mvsde/model.hpp"
#include "mvsde/skeleton.hpp"
#include "mvsde/simulate.hpp"
#include "mvsde/action.hpp"
#include "mvsde/ldp.hpp"
#include "mvsde/config.hpp"
#include "mvsde/artifacts.hpp"
#include "mvsde/runner.hpp"
