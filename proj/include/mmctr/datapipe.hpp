#pragma once

#include "mmctr/datapipe/batching.hpp"
#include "mmctr/datapipe/io.hpp"
#include "mmctr/datapipe/synthetic.hpp"
#include "mmctr/datapipe/types.hpp"
