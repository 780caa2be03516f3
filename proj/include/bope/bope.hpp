#pragma once

#include "bope/balance.hpp"
#include "bope/estimators.hpp"
#include "bope/harness.hpp"
#include "bope/kernels.hpp"
#include "bope/qp.hpp"
#include "bope/rng.hpp"
#include "bope/simulation.hpp"
#include "bope/trajectories.hpp"
