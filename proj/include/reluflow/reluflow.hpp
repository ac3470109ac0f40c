#pragma once

// Umbrella header.

#include "reluflow/dataset.hpp"
#include "reluflow/experiment.hpp"
#include "reluflow/flow.hpp"
#include "reluflow/io.hpp"
#include "reluflow/linalg.hpp"
#include "reluflow/network.hpp"
#include "reluflow/pca.hpp"
#include "reluflow/phases.hpp"
#include "reluflow/rng.hpp"
#include "reluflow/svg.hpp"
#include "reluflow/theory.hpp"
