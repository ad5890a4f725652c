#pragma once

#include "scpuq/error.hpp"
#include "scpuq/io.hpp"
#include "scpuq/mc.hpp"
#include "scpuq/models/gas_market.hpp"
#include "scpuq/models/golombek.hpp"
#include "scpuq/models/model_file.hpp"
#include "scpuq/models/oligopoly.hpp"
#include "scpuq/ncp.hpp"
#include "scpuq/opt_adapter.hpp"
#include "scpuq/parallel.hpp"
#include "scpuq/solver.hpp"
#include "scpuq/sparse_ndarray.hpp"
#include "scpuq/uq.hpp"
