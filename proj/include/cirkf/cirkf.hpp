#pragma once

// Umbrella header. io.hpp is left out because it needs nlohmann/json.

#include "cirkf/baselines.hpp"
#include "cirkf/cir.hpp"
#include "cirkf/errors.hpp"
#include "cirkf/eval.hpp"
#include "cirkf/metrics.hpp"
#include "cirkf/random.hpp"
#include "cirkf/shift.hpp"
#include "cirkf/simplex.hpp"
#include "cirkf/statespace.hpp"
#include "cirkf/synth.hpp"
