#pragma once

// Umbrella header: individual-based epidemic simulation with infection-age
// dependent random infectivity, the deterministic Volterra (FLLN) limits,
// the Gaussian fluctuation (FCLT) limits, and the Monte Carlo verification
// harness tying them together.

#include "varinf/common.hpp"
#include "varinf/config.hpp"
#include "varinf/distributions.hpp"
#include "varinf/fclt.hpp"
#include "varinf/flln.hpp"
#include "varinf/infectivity.hpp"
#include "varinf/io.hpp"
#include "varinf/moments.hpp"
#include "varinf/simulator.hpp"
#include "varinf/verify.hpp"
