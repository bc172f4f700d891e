#pragma once

#include "error.hpp"
#include "parallel.hpp"
#include "hilbert.hpp"
#include "fft.hpp"
#include "density.hpp"
#include "dynamics.hpp"
#include "branches.hpp"
#include "stats.hpp"
#include "ontologies.hpp"
#include "scenarios.hpp"
#include "io.hpp"
#include "cli.hpp"
