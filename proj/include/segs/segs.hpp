// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/ablation.hpp"
#include "segs/config.hpp"
#include "segs/core.hpp"
#include "segs/density.hpp"
#include "segs/io.hpp"
#include "segs/losses.hpp"
#include "segs/metrics.hpp"
#include "segs/optimizer.hpp"
#include "segs/perturb.hpp"
#include "segs/random.hpp"
#include "segs/renderer.hpp"
#include "segs/scene.hpp"
#include "segs/training.hpp"
#include "segs/uncertainty.hpp"
#include "segs/views.hpp"
