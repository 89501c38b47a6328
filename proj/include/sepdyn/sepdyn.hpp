#pragma once

#include "sepdyn/hilbert.hpp"
#include "sepdyn/rng.hpp"
#include "sepdyn/model.hpp"
#include "sepdyn/measures.hpp"
#include "sepdyn/ensemble.hpp"
#include "sepdyn/mcwf.hpp"
#include "sepdyn/sep_mcwf.hpp"
#include "sepdyn/master_eq.hpp"
#include "sepdyn/stochastic.hpp"
#include "sepdyn/scenarios.hpp"
