#pragma once

#include "gridcast/error.hpp"
#include "gridcast/timeutil.hpp"
#include "gridcast/dataset.hpp"
#include "gridcast/calendar.hpp"
#include "gridcast/windowing.hpp"
#include "gridcast/tensor.hpp"
#include "gridcast/autodiff.hpp"
#include "gridcast/models.hpp"
#include "gridcast/optim.hpp"
#include "gridcast/training.hpp"
#include "gridcast/evaluation.hpp"
#include "gridcast/gradcheck_suite.hpp"
#include "gridcast/experiment.hpp"
