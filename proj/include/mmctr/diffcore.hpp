#pragma once

#include "mmctr/diffcore/attention.hpp"
#include "mmctr/diffcore/gradcheck.hpp"
#include "mmctr/diffcore/graph.hpp"
#include "mmctr/diffcore/ops.hpp"
#include "mmctr/diffcore/tensor.hpp"
