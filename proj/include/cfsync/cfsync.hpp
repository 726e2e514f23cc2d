#pragma once

#include "controllers.hpp"
#include "core_types.hpp"
#include "errors.hpp"
#include "fast_analysis.hpp"
#include "freq_domain.hpp"
#include "linalg.hpp"
#include "network.hpp"
#include "rational.hpp"
#include "simulator.hpp"
#include "slow_analysis.hpp"
