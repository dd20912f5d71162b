#pragma once

#include "hydra2/distributed.hpp"
#include "hydra2/error.hpp"
#include "hydra2/generate.hpp"
#include "hydra2/io.hpp"
#include "hydra2/numeric.hpp"
#include "hydra2/problem.hpp"
#include "hydra2/sampling.hpp"
#include "hydra2/solver.hpp"
#include "hydra2/sparse_matrix.hpp"
#include "hydra2/stepsize.hpp"
