#pragma once

#include "assignment.hpp"
#include "classifications.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "data_model.hpp"
#include "distributions.hpp"
#include "error.hpp"
#include "evt_gpd.hpp"
#include "gamlss.hpp"
#include "gof.hpp"
#include "harness.hpp"
#include "inference.hpp"
#include "log.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "scoring.hpp"
#include "spline.hpp"
