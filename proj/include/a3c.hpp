#pragma once

#include "a3c/config.hpp"
#include "a3c/csv.hpp"
#include "a3c/engine.hpp"
#include "a3c/env_io.hpp"
#include "a3c/errors.hpp"
#include "a3c/harness.hpp"
#include "a3c/mdp.hpp"
#include "a3c/oracles.hpp"
#include "a3c/plot.hpp"
#include "a3c/rng.hpp"
