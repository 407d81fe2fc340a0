#pragma once

#include "qadapt/circuit.hpp"
#include "qadapt/linalg.hpp"
#include "qadapt/preprocess.hpp"
#include "qadapt/subrules.hpp"
#include "qadapt/smt_model.hpp"
#include "qadapt/adapt.hpp"
#include "qadapt/noise_sim.hpp"
#include "qadapt/bench.hpp"
