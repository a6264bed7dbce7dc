// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

// Everything except the command-line front end (gcmae/cli.hpp).

#pragma once

#include "gcmae/augment.hpp"
#include "gcmae/checkpoint.hpp"
#include "gcmae/config.hpp"
#include "gcmae/error.hpp"
#include "gcmae/eval.hpp"
#include "gcmae/graph.hpp"
#include "gcmae/losses.hpp"
#include "gcmae/model.hpp"
#include "gcmae/ops.hpp"
#include "gcmae/optim.hpp"
#include "gcmae/rng.hpp"
#include "gcmae/tensor.hpp"
#include "gcmae/train.hpp"
