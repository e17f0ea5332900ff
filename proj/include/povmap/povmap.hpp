#pragma once

// Everything in one include.

#include "povmap/autograd.hpp"
#include "povmap/chain.hpp"
#include "povmap/checkpoint.hpp"
#include "povmap/config.hpp"
#include "povmap/csv.hpp"
#include "povmap/cv.hpp"
#include "povmap/error.hpp"
#include "povmap/features.hpp"
#include "povmap/gemm.hpp"
#include "povmap/gmm.hpp"
#include "povmap/image.hpp"
#include "povmap/logreg.hpp"
#include "povmap/metrics.hpp"
#include "povmap/network.hpp"
#include "povmap/noise.hpp"
#include "povmap/ops.hpp"
#include "povmap/parallel.hpp"
#include "povmap/raster.hpp"
#include "povmap/seed.hpp"
#include "povmap/sgd.hpp"
#include "povmap/shapes.hpp"
#include "povmap/tensor.hpp"
#include "povmap/tiles.hpp"
#include "povmap/trainer.hpp"
#include "povmap/viz.hpp"
#include "povmap/world.hpp"
