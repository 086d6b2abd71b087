#pragma once

#include "brwlab/brw.hpp"
#include "brwlab/config.hpp"
#include "brwlab/fluctuation.hpp"
#include "brwlab/green.hpp"
#include "brwlab/kozlov.hpp"
#include "brwlab/limits.hpp"
#include "brwlab/offspring.hpp"
#include "brwlab/output.hpp"
#include "brwlab/parallel.hpp"
#include "brwlab/rng.hpp"
#include "brwlab/selftest.hpp"
#include "brwlab/spine.hpp"
#include "brwlab/stats.hpp"
#include "brwlab/svg.hpp"
#include "brwlab/tauberian.hpp"
