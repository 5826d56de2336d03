#pragma once

#include "lssclt/config.hpp"
#include "lssclt/contour.hpp"
#include "lssclt/kernels.hpp"
#include "lssclt/montecarlo.hpp"
#include "lssclt/numeric.hpp"
#include "lssclt/spectrum.hpp"
#include "lssclt/spiked.hpp"
#include "lssclt/stieltjes.hpp"
