#pragma once

#include "expsel/baselines.hpp"
#include "expsel/error.hpp"
#include "expsel/evaluation.hpp"
#include "expsel/feature_store.hpp"
#include "expsel/gaussian_fd.hpp"
#include "expsel/localisation.hpp"
#include "expsel/map_store.hpp"
#include "expsel/ranking.hpp"
#include "expsel/synthetic.hpp"
#include "expsel/vdna.hpp"
