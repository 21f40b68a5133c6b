#pragma once

#include "sdeq/beckmann.hpp"
#include "sdeq/costs.hpp"
#include "sdeq/demand.hpp"
#include "sdeq/elp.hpp"
#include "sdeq/error.hpp"
#include "sdeq/matrix.hpp"
#include "sdeq/network.hpp"
#include "sdeq/stable_dynamics.hpp"
#include "sdeq/three_stage.hpp"
