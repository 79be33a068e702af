#pragma once

#include "qadim/analytics.hpp"
#include "qadim/cli.hpp"
#include "qadim/dimension.hpp"
#include "qadim/errors.hpp"
#include "qadim/experiments.hpp"
#include "qadim/measures.hpp"
#include "qadim/randomness.hpp"
#include "qadim/render.hpp"
#include "qadim/tree_core.hpp"
