#pragma once

// Umbrella header.
#include "grad/adam.hpp"
#include "grad/checkpoint.hpp"
#include "grad/config.hpp"
#include "grad/datasets.hpp"
#include "grad/detector.hpp"
#include "grad/diffusion.hpp"
#include "grad/error.hpp"
#include "grad/gcl.hpp"
#include "grad/gradcheck.hpp"
#include "grad/graph.hpp"
#include "grad/matrix.hpp"
#include "grad/metrics.hpp"
#include "grad/pipeline.hpp"
#include "grad/ppr.hpp"
#include "grad/random.hpp"
#include "grad/sampler.hpp"
