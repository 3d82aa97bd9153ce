#pragma once

// Umbrella header.

#include "netpatch/ddnn.hpp"
#include "netpatch/errors.hpp"
#include "netpatch/io.hpp"
#include "netpatch/jacobian.hpp"
#include "netpatch/linalg.hpp"
#include "netpatch/lp.hpp"
#include "netpatch/metrics.hpp"
#include "netpatch/network.hpp"
#include "netpatch/regions.hpp"
#include "netpatch/repair.hpp"
#include "netpatch/tolerances.hpp"
