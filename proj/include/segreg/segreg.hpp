#pragma once

#include "segreg/cache.hpp"
#include "segreg/detect.hpp"
#include "segreg/io.hpp"
#include "segreg/lasso.hpp"
#include "segreg/parallel.hpp"
#include "segreg/rng.hpp"
#include "segreg/simulate.hpp"
#include "segreg/tuning.hpp"
#include "segreg/types.hpp"
#include "segreg/version.hpp"
