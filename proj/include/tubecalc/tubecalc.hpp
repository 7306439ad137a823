#pragma once

// Umbrella header: signed-distance shape calculus on tubular neighborhoods.

#include "tubecalc/convergence.hpp"
#include "tubecalc/domain_pde.hpp"
#include "tubecalc/functionals.hpp"
#include "tubecalc/grid.hpp"
#include "tubecalc/reach.hpp"
#include "tubecalc/runner.hpp"
#include "tubecalc/sdf.hpp"
#include "tubecalc/shape.hpp"
#include "tubecalc/surface_pde.hpp"
#include "tubecalc/tube.hpp"
