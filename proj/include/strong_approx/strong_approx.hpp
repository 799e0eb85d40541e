#ifndef STRONG_APPROX_STRONG_APPROX_HPP
#define STRONG_APPROX_STRONG_APPROX_HPP

#include "strong_approx/class_gauge.hpp"
#include "strong_approx/dist_io.hpp"
#include "strong_approx/error.hpp"
#include "strong_approx/grid_dist.hpp"
#include "strong_approx/harness.hpp"
#include "strong_approx/kmt.hpp"
#include "strong_approx/report.hpp"
#include "strong_approx/rng.hpp"
#include "strong_approx/special.hpp"
#include "strong_approx/transport.hpp"

#endif
