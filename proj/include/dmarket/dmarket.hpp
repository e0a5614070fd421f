#pragma once

#include "dmarket/csv.hpp"
#include "dmarket/design.hpp"
#include "dmarket/error.hpp"
#include "dmarket/gaps.hpp"
#include "dmarket/glm.hpp"
#include "dmarket/graph.hpp"
#include "dmarket/market_data.hpp"
#include "dmarket/parallel.hpp"
#include "dmarket/pipeline.hpp"
#include "dmarket/stats.hpp"
#include "dmarket/synth.hpp"
#include "dmarket/text.hpp"
