#pragma once

#include "activebc/arm.hpp"
#include "activebc/camera.hpp"
#include "activebc/dataset.hpp"
#include "activebc/episode.hpp"
#include "activebc/error.hpp"
#include "activebc/experiment.hpp"
#include "activebc/expert.hpp"
#include "activebc/policy.hpp"
#include "activebc/render.hpp"
#include "activebc/rng.hpp"
#include "activebc/rollout.hpp"
#include "activebc/scene.hpp"
#include "activebc/teleop.hpp"
