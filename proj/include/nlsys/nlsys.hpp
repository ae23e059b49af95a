#pragma once

#include "nlsys/errors.hpp"
#include "nlsys/grid.hpp"
#include "nlsys/convolution.hpp"
#include "nlsys/system.hpp"
#include "nlsys/integrator.hpp"
#include "nlsys/initial_data.hpp"
#include "nlsys/morawetz.hpp"
#include "nlsys/scattering.hpp"
#include "nlsys/gnineq.hpp"
#include "nlsys/io.hpp"
#include "nlsys/config.hpp"
#include "nlsys/run.hpp"
