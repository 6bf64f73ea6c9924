#pragma once

// Umbrella header: pulls in the whole library.

#include "fixpool/core.hpp"
#include "fixpool/config.hpp"
#include "fixpool/dataset.hpp"
#include "fixpool/episode.hpp"
#include "fixpool/pool.hpp"
#include "fixpool/embedding.hpp"
#include "fixpool/heads.hpp"
#include "fixpool/objectives.hpp"
#include "fixpool/trainer.hpp"
#include "fixpool/diagnostics.hpp"
#include "fixpool/linreg.hpp"
#include "fixpool/regression.hpp"
#include "fixpool/csvplot.hpp"
