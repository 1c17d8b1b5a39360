#pragma once

#include "confgeom/errors.hpp"
#include "confgeom/tensor.hpp"
#include "confgeom/tensorops.hpp"
#include "confgeom/bessel.hpp"
#include "confgeom/expfam.hpp"
#include "confgeom/geometry.hpp"
#include "confgeom/conformal.hpp"
#include "confgeom/models.hpp"
#include "confgeom/sequential.hpp"
#include "confgeom/harness.hpp"
#include "confgeom/report.hpp"
