#pragma once

#include "mono3dt/assignment.hpp"
#include "mono3dt/association.hpp"
#include "mono3dt/config.hpp"
#include "mono3dt/errors.hpp"
#include "mono3dt/geometry.hpp"
#include "mono3dt/io.hpp"
#include "mono3dt/kalman.hpp"
#include "mono3dt/lstm.hpp"
#include "mono3dt/metrics.hpp"
#include "mono3dt/motion.hpp"
#include "mono3dt/region.hpp"
#include "mono3dt/simulator.hpp"
#include "mono3dt/tracker.hpp"
#include "mono3dt/types.hpp"
