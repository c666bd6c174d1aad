#pragma once

#include "soilpq/error.hpp"
#include "soilpq/kmeans.hpp"
#include "soilpq/matrix.hpp"
#include "soilpq/parallel.hpp"
#include "soilpq/persistence.hpp"
#include "soilpq/pq.hpp"
#include "soilpq/preprocess.hpp"
#include "soilpq/search.hpp"
#include "soilpq/sweep.hpp"
