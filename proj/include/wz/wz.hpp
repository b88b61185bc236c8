#pragma once

// Umbrella header: multiscale SDE schemes on the torus, their limiting
// scheme, the exact Ornstein-Uhlenbeck machinery, and the strong-error
// experiment harness.

#include "wz/errors.hpp"
#include "wz/fields.hpp"
#include "wz/fit.hpp"
#include "wz/gridspec.hpp"
#include "wz/harness.hpp"
#include "wz/integrators.hpp"
#include "wz/ou.hpp"
#include "wz/parallel.hpp"
#include "wz/rng.hpp"
#include "wz/schemes.hpp"
#include "wz/torus.hpp"
