#pragma once

// Umbrella header.

#include "occf/conic.hpp"
#include "occf/errors.hpp"
#include "occf/extraction.hpp"
#include "occf/format.hpp"
#include "occf/model_io.hpp"
#include "occf/models.hpp"
#include "occf/moments.hpp"
#include "occf/ocp.hpp"
#include "occf/oracle.hpp"
#include "occf/pipeline.hpp"
#include "occf/polynomial.hpp"
#include "occf/sdpa.hpp"
#include "occf/solver.hpp"
