#pragma once

#include "hmlab/vec3.hpp"
#include "hmlab/domain.hpp"
#include "hmlab/field.hpp"
#include "hmlab/field_io.hpp"
#include "hmlab/energy.hpp"
#include "hmlab/trace_norms.hpp"
#include "hmlab/minimizer.hpp"
#include "hmlab/singularity.hpp"
#include "hmlab/experiment.hpp"
