// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "core.hpp"
#include "wav.hpp"
#include "features.hpp"
#include "dataprep.hpp"
#include "annotation.hpp"
#include "losses.hpp"
#include "models.hpp"
#include "training.hpp"
#include "postproc.hpp"
#include "evaluation.hpp"
#include "exertion.hpp"
#include "pipeline.hpp"
