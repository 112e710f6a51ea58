#pragma once

#include "tesr/dataset.hpp"
#include "tesr/dependence.hpp"
#include "tesr/distance.hpp"
#include "tesr/finite_difference.hpp"
#include "tesr/harness.hpp"
#include "tesr/linear.hpp"
#include "tesr/losses.hpp"
#include "tesr/metrics.hpp"
#include "tesr/mlp.hpp"
#include "tesr/networks.hpp"
#include "tesr/rmsprop.hpp"
#include "tesr/simgen.hpp"
#include "tesr/tensor.hpp"
#include "tesr/training.hpp"
