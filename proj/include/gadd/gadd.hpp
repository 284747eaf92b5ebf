#pragma once

#include "gadd/common.hpp"
#include "gadd/config.hpp"
#include "gadd/corrector.hpp"
#include "gadd/evaluation.hpp"
#include "gadd/experiment.hpp"
#include "gadd/forward_process.hpp"
#include "gadd/kernel.hpp"
#include "gadd/pipeline.hpp"
#include "gadd/predictor.hpp"
#include "gadd/score_oracle.hpp"
#include "gadd/state_space.hpp"
#include "gadd/targets.hpp"
#include "gadd/validate.hpp"
