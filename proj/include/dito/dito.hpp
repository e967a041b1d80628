#pragma once

#include "dito/basis.hpp"
#include "dito/dif.hpp"
#include "dito/error.hpp"
#include "dito/fdsolver.hpp"
#include "dito/io.hpp"
#include "dito/law.hpp"
#include "dito/montecarlo.hpp"
#include "dito/polynomial.hpp"
#include "dito/quadrature.hpp"
#include "dito/random.hpp"
#include "dito/scheme.hpp"
#include "dito/walsh.hpp"
