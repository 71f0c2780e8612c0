// Copyright Contributors to the FastSurf Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fastsurf/common.hpp"
#include "fastsurf/dataset.hpp"
#include "fastsurf/feature_grid.hpp"
#include "fastsurf/frames.hpp"
#include "fastsurf/geometry.hpp"
#include "fastsurf/mesh.hpp"
#include "fastsurf/metrics.hpp"
#include "fastsurf/model.hpp"
#include "fastsurf/nn.hpp"
#include "fastsurf/rays.hpp"
#include "fastsurf/render.hpp"
#include "fastsurf/scene.hpp"
#include "fastsurf/trainer.hpp"
#include "fastsurf/tsdf.hpp"
