#pragma once

// Umbrella header for the ecl lab library.

#include "ecl/checkpoint.hpp"
#include "ecl/dataset.hpp"
#include "ecl/experiment.hpp"
#include "ecl/gradcheck.hpp"
#include "ecl/losses.hpp"
#include "ecl/matrix.hpp"
#include "ecl/metrics.hpp"
#include "ecl/network.hpp"
#include "ecl/proxy.hpp"
#include "ecl/rng.hpp"
#include "ecl/sampler.hpp"
#include "ecl/trainer.hpp"
