#pragma once

#include "smlelm/data_model.hpp"
#include "smlelm/elm_core.hpp"
#include "smlelm/error.hpp"
#include "smlelm/kernels.hpp"
#include "smlelm/metrics.hpp"
#include "smlelm/pipeline.hpp"
#include "smlelm/render.hpp"
#include "smlelm/rng.hpp"
#include "smlelm/smle_solver.hpp"
#include "smlelm/synth.hpp"
#include "smlelm/wcf.hpp"
