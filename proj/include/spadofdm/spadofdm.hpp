#pragma once

#include "spadofdm/analysis.hpp"
#include "spadofdm/link.hpp"
#include "spadofdm/math_util.hpp"
#include "spadofdm/ofdm.hpp"
#include "spadofdm/scenario_io.hpp"
#include "spadofdm/spad.hpp"
