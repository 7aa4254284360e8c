#pragma once

#include "priorsep/audio_io.hpp"
#include "priorsep/config.hpp"
#include "priorsep/core.hpp"
#include "priorsep/dsp.hpp"
#include "priorsep/engine.hpp"
#include "priorsep/gradcheck.hpp"
#include "priorsep/harness.hpp"
#include "priorsep/losses.hpp"
#include "priorsep/metrics.hpp"
#include "priorsep/priors.hpp"
