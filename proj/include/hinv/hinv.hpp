#pragma once

#include "hinv/bowen.hpp"
#include "hinv/cocycle.hpp"
#include "hinv/control.hpp"
#include "hinv/error.hpp"
#include "hinv/escape.hpp"
#include "hinv/fibers.hpp"
#include "hinv/graph.hpp"
#include "hinv/grid.hpp"
#include "hinv/linalg.hpp"
#include "hinv/mean_cycle.hpp"
#include "hinv/parallel.hpp"
#include "hinv/projective.hpp"
#include "hinv/report.hpp"
#include "hinv/separated.hpp"
#include "hinv/system.hpp"
#include "hinv/upper.hpp"
