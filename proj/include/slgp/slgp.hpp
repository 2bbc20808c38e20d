#pragma once

#include "slgp/conjugate.hpp"
#include "slgp/core.hpp"
#include "slgp/covariance.hpp"
#include "slgp/crossval.hpp"
#include "slgp/dense_oracle.hpp"
#include "slgp/geometry.hpp"
#include "slgp/io.hpp"
#include "slgp/model.hpp"
#include "slgp/nngp.hpp"
#include "slgp/predict.hpp"
#include "slgp/simulate.hpp"
