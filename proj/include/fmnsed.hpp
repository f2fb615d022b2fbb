#pragma once

#include "fmnsed/assembly.hpp"
#include "fmnsed/backbone.hpp"
#include "fmnsed/complexity.hpp"
#include "fmnsed/error.hpp"
#include "fmnsed/events_io.hpp"
#include "fmnsed/features.hpp"
#include "fmnsed/kernels.hpp"
#include "fmnsed/objectives.hpp"
#include "fmnsed/postprocess.hpp"
#include "fmnsed/profiling.hpp"
#include "fmnsed/psds.hpp"
#include "fmnsed/scan.hpp"
#include "fmnsed/seqmodels.hpp"
#include "fmnsed/tensor.hpp"
#include "fmnsed/threading.hpp"
#include "fmnsed/weights.hpp"
#include "fmnsed/weights_io.hpp"
