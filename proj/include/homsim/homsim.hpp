#pragma once

// Umbrella header: the whole library is header-only.

#include "homsim/analysis.hpp"
#include "homsim/config.hpp"
#include "homsim/csv.hpp"
#include "homsim/detector.hpp"
#include "homsim/detector_fit.hpp"
#include "homsim/histogram.hpp"
#include "homsim/least_squares.hpp"
#include "homsim/manifest.hpp"
#include "homsim/physics.hpp"
#include "homsim/rng.hpp"
#include "homsim/simulator.hpp"
#include "homsim/svg.hpp"
#include "homsim/tagio.hpp"
#include "homsim/util.hpp"
