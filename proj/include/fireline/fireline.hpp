#pragma once

#include "fireline/augment.hpp"
#include "fireline/autograd.hpp"
#include "fireline/bench.hpp"
#include "fireline/checkpoint.hpp"
#include "fireline/config.hpp"
#include "fireline/dataset.hpp"
#include "fireline/error.hpp"
#include "fireline/kernels.hpp"
#include "fireline/losses.hpp"
#include "fireline/manifest.hpp"
#include "fireline/netpbm.hpp"
#include "fireline/network.hpp"
#include "fireline/ops.hpp"
#include "fireline/optim.hpp"
#include "fireline/rng.hpp"
#include "fireline/streaming.hpp"
#include "fireline/synth.hpp"
#include "fireline/tensor.hpp"
#include "fireline/train.hpp"
