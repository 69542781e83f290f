#pragma once

/// Umbrella header for the solver library (the CLI layer lives in cli.hpp).

#include "fdesolve/config.hpp"
#include "fdesolve/error.hpp"
#include "fdesolve/expr.hpp"
#include "fdesolve/funcspace.hpp"
#include "fdesolve/oracle.hpp"
#include "fdesolve/picard.hpp"
#include "fdesolve/problem.hpp"
