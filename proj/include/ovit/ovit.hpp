#pragma once

#include "ovit/tensorstore.hpp"
#include "ovit/fisher.hpp"
#include "ovit/obs.hpp"
#include "ovit/solver.hpp"
#include "ovit/pruners.hpp"
#include "ovit/schedules.hpp"
#include "ovit/toy.hpp"
#include "ovit/pipeline.hpp"
#include "ovit/oracle.hpp"
