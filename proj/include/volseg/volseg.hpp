#pragma once

#include "volseg/augmentation.hpp"
#include "volseg/error.hpp"
#include "volseg/grid.hpp"
#include "volseg/inference.hpp"
#include "volseg/layers.hpp"
#include "volseg/metrics.hpp"
#include "volseg/network.hpp"
#include "volseg/nifti.hpp"
#include "volseg/resample.hpp"
#include "volseg/run_config.hpp"
#include "volseg/sampling.hpp"
#include "volseg/weights_io.hpp"
