#pragma once

// Umbrella header for the library (everything except the command-line front end).

#include "gda/align.hpp"
#include "gda/config.hpp"
#include "gda/csbm.hpp"
#include "gda/encoder.hpp"
#include "gda/error.hpp"
#include "gda/graph.hpp"
#include "gda/graph_io.hpp"
#include "gda/grid.hpp"
#include "gda/io.hpp"
#include "gda/matrix.hpp"
#include "gda/metrics.hpp"
#include "gda/optim.hpp"
#include "gda/rng.hpp"
#include "gda/shift.hpp"
#include "gda/snapshot.hpp"
#include "gda/tape.hpp"
#include "gda/trainer.hpp"
#include "gda/unsup.hpp"
