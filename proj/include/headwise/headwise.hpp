#pragma once

#include "headwise/arena.hpp"
#include "headwise/engine.hpp"
#include "headwise/error.hpp"
#include "headwise/matrix.hpp"
#include "headwise/memory.hpp"
#include "headwise/pingpong.hpp"
#include "headwise/planner.hpp"
#include "headwise/report.hpp"
#include "headwise/roofline.hpp"
#include "headwise/runtime.hpp"
#include "headwise/timeline.hpp"
#include "headwise/units.hpp"
#include "headwise/workload.hpp"
