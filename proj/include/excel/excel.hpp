#pragma once

#include "excel/error.hpp"
#include "excel/npy.hpp"
#include "excel/logit_store.hpp"
#include "excel/ranking.hpp"
#include "excel/clm.hpp"
#include "excel/clm_io.hpp"
#include "excel/scoring.hpp"
#include "excel/metrics.hpp"
#include "excel/tuning.hpp"
#include "excel/synth.hpp"
