// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ddpmw2/assignment.hpp"
#include "ddpmw2/contraction.hpp"
#include "ddpmw2/error.hpp"
#include "ddpmw2/harness.hpp"
#include "ddpmw2/json_io.hpp"
#include "ddpmw2/metrics.hpp"
#include "ddpmw2/oracle.hpp"
#include "ddpmw2/parallel.hpp"
#include "ddpmw2/phi.hpp"
#include "ddpmw2/rng.hpp"
#include "ddpmw2/sample_io.hpp"
#include "ddpmw2/sampler.hpp"
#include "ddpmw2/schedule.hpp"
#include "ddpmw2/special.hpp"
#include "ddpmw2/targets.hpp"
#include "ddpmw2/theory.hpp"
#include "ddpmw2/tweedie.hpp"
