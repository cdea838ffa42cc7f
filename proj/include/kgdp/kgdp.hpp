#pragma once

// Everything except the HTTP binding, which pulls in cpp-httplib.

#include "kgdp/advisor.hpp"
#include "kgdp/belief.hpp"
#include "kgdp/benchmarks.hpp"
#include "kgdp/config.hpp"
#include "kgdp/core.hpp"
#include "kgdp/error.hpp"
#include "kgdp/harness.hpp"
#include "kgdp/policies.hpp"
#include "kgdp/quadrature.hpp"
#include "kgdp/resampler.hpp"
#include "kgdp/results_csv.hpp"
#include "kgdp/rng.hpp"
#include "kgdp/version.hpp"
