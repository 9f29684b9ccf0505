#pragma once

#include "cohsim/phasor.hpp"
#include "cohsim/error.hpp"
#include "cohsim/netcore.hpp"
#include "cohsim/machines.hpp"
#include "cohsim/pll.hpp"
#include "cohsim/signals.hpp"
#include "cohsim/converter.hpp"
#include "cohsim/scenario.hpp"
#include "cohsim/integrator.hpp"
#include "cohsim/metrics.hpp"
#include "cohsim/engine.hpp"
#include "cohsim/csv.hpp"
#include "cohsim/catalog.hpp"
