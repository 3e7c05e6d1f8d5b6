#pragma once

// Flow-matching sampling engine with zero-shot regional style composition
// via masked fusion of clean-latent estimates.

#include "flowcomp/depth.hpp"
#include "flowcomp/errors.hpp"
#include "flowcomp/io.hpp"
#include "flowcomp/mask.hpp"
#include "flowcomp/metrics.hpp"
#include "flowcomp/mlp.hpp"
#include "flowcomp/rng.hpp"
#include "flowcomp/sampler.hpp"
#include "flowcomp/schedule.hpp"
#include "flowcomp/tensor.hpp"
#include "flowcomp/train.hpp"
#include "flowcomp/velocity.hpp"
#include "flowcomp/version.hpp"
