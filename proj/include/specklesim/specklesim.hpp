#pragma once

// Umbrella header: the forward speckle-holography simulator, the
// autocorrelation measurement stack, abundance inversion, metrics, and the
// persistence formats.

#include "specklesim/errors.hpp"
#include "specklesim/estimator.hpp"
#include "specklesim/fft.hpp"
#include "specklesim/forward.hpp"
#include "specklesim/grid.hpp"
#include "specklesim/io.hpp"
#include "specklesim/linalg.hpp"
#include "specklesim/metrics.hpp"
#include "specklesim/nnls.hpp"
#include "specklesim/numerics.hpp"
#include "specklesim/pipeline.hpp"
#include "specklesim/rng.hpp"
#include "specklesim/scene.hpp"
#include "specklesim/speckle.hpp"
