#pragma once

#include "airfl/bounds.hpp"
#include "airfl/channel.hpp"
#include "airfl/datasets.hpp"
#include "airfl/engine.hpp"
#include "airfl/gradcheck.hpp"
#include "airfl/gradient.hpp"
#include "airfl/io.hpp"
#include "airfl/learner.hpp"
#include "airfl/residual.hpp"
#include "airfl/rng.hpp"
#include "airfl/scheduler.hpp"
