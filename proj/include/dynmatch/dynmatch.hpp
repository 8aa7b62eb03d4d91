#pragma once

#include "dynmatch/compat.hpp"
#include "dynmatch/errors.hpp"
#include "dynmatch/graph.hpp"
#include "dynmatch/matching.hpp"
#include "dynmatch/random.hpp"
#include "dynmatch/scenario.hpp"
#include "dynmatch/sim.hpp"
#include "dynmatch/stats.hpp"
#include "dynmatch/theory.hpp"
