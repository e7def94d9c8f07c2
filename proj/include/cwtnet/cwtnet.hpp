#pragma once

#include "cwtnet/errors.hpp"
#include "cwtnet/rng.hpp"
#include "cwtnet/tensor.hpp"
#include "cwtnet/parallel.hpp"
#include "cwtnet/autodiff.hpp"
#include "cwtnet/kernels.hpp"
#include "cwtnet/ops.hpp"
#include "cwtnet/resize.hpp"
#include "cwtnet/wavelet.hpp"
#include "cwtnet/attention.hpp"
#include "cwtnet/blocks.hpp"
#include "cwtnet/network.hpp"
#include "cwtnet/objective.hpp"
#include "cwtnet/gradcheck.hpp"
#include "cwtnet/optim.hpp"
#include "cwtnet/data.hpp"
#include "cwtnet/image_io.hpp"
#include "cwtnet/dataset_io.hpp"
#include "cwtnet/config.hpp"
#include "cwtnet/checkpoint.hpp"
#include "cwtnet/training.hpp"
