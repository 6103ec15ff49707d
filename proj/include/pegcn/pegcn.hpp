#pragma once

#include "pegcn/autodiff.hpp"
#include "pegcn/checkpoint.hpp"
#include "pegcn/clip.hpp"
#include "pegcn/common.hpp"
#include "pegcn/config.hpp"
#include "pegcn/graph_partitions.hpp"
#include "pegcn/io.hpp"
#include "pegcn/losses.hpp"
#include "pegcn/metrics.hpp"
#include "pegcn/model.hpp"
#include "pegcn/noise.hpp"
#include "pegcn/optimizer.hpp"
#include "pegcn/rng.hpp"
#include "pegcn/synth.hpp"
#include "pegcn/tensor.hpp"
#include "pegcn/topology.hpp"
#include "pegcn/train.hpp"
